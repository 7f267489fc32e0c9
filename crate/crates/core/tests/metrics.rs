use std::collections::BTreeMap;

use crowdtag::corpus::{Polarity, Span};
use crowdtag::metrics::{binary_prf, evaluate, exact_prf, proportional_prf, Prf, SpanSet};
use crowdtag::tags::decode_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_spans(n: usize, rng: &mut ChaCha8Rng) -> Vec<Span> {
    // O-heavy tag draws keep spans sparse, as in real annotations
    let labels: Vec<usize> = (0..n)
        .map(|_| if rng.random_bool(0.5) { 0 } else { rng.random_range(1..5) })
        .collect();
    decode_indices(&labels)
}

fn random_pair(rng: &mut ChaCha8Rng) -> (SpanSet, SpanSet) {
    let (mut gold, mut pred) = (BTreeMap::new(), BTreeMap::new());
    for s in 0..rng.random_range(1..=4) {
        let n = rng.random_range(1..=12);
        gold.insert(format!("s{s}"), random_spans(n, rng));
        pred.insert(format!("s{s}"), random_spans(n, rng));
    }
    (gold, pred)
}

fn le(a: &Prf, b: &Prf) -> bool {
    let tol = 1e-12;
    a.precision <= b.precision + tol && a.recall <= b.recall + tol && a.f1 <= b.f1 + tol
}

#[test]
fn exact_never_beats_proportional_never_beats_binary() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for i in 0..1000 {
        let (g, p) = random_pair(&mut rng);
        let e = exact_prf(&g, &p).unwrap();
        let r = proportional_prf(&g, &p).unwrap();
        let b = binary_prf(&g, &p).unwrap();
        assert!(le(&e, &r) && le(&r, &b), "pair {i}: {e:?} {r:?} {b:?}");
    }
}

#[test]
fn trimmed_left_boundary() {
    let one = |s: Span| BTreeMap::from([("s".to_string(), vec![s])]);
    let gold = one(Span::new(0, 4, Polarity::Pos));
    let pred = one(Span::new(1, 4, Polarity::Pos));
    let r = proportional_prf(&gold, &pred).unwrap();
    assert_eq!((r.precision, r.recall), (1.0, 0.75));
    let b = binary_prf(&gold, &pred).unwrap();
    assert_eq!((b.precision, b.recall), (1.0, 1.0));
    assert_eq!(exact_prf(&gold, &pred).unwrap().f1, 0.0);
}

#[test]
fn perfect_prediction_scores_one_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..50 {
        let (g, _) = random_pair(&mut rng);
        if g.values().all(Vec::is_empty) {
            continue;
        }
        let r = evaluate(&g, &g).unwrap();
        for prf in [r.exact, r.proportional, r.binary] {
            assert_eq!(prf, Prf::from_ratio(1.0, 1.0));
        }
    }
}
