use super::{CorpusError, CrowdCorpus, Polarity};
use crate::tags::{self, Tag};

/// Label space used to compare annotators token by token.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KappaLabels {
    /// Five BIO tags, so boundary disagreements count.
    #[default]
    Bio,
    /// `{O, POS, NEG}` only.
    Polarity,
}

fn labels_for(spans: &[super::Span], len: usize, space: KappaLabels) -> Vec<usize> {
    let bio = tags::encode(spans, len).expect("validated corpus");
    match space {
        KappaLabels::Bio => bio.iter().map(|t| t.index()).collect(),
        KappaLabels::Polarity => bio
            .iter()
            .map(|t| match t.polarity() {
                None => 0,
                Some(Polarity::Pos) => 1,
                Some(Polarity::Neg) => 2,
            })
            .collect(),
    }
}

fn cohen(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut ca = [0usize; Tag::COUNT];
    let mut cb = [0usize; Tag::COUNT];
    let mut agree = 0;
    for (&x, &y) in a.iter().zip(b) {
        ca[x] += 1;
        cb[y] += 1;
        agree += usize::from(x == y);
    }
    let po = agree as f64 / n;
    let pe: f64 = ca.iter().zip(&cb).map(|(&x, &y)| (x as f64 / n) * (y as f64 / n)).sum();
    if (1.0 - pe).abs() < 1e-15 {
        // both annotators used one identical label throughout
        return 1.0;
    }
    (po - pe) / (1.0 - pe)
}

/// Token-level Cohen's kappa averaged over annotator pairs within each
/// sentence, then over sentences.
///
/// Sentences with fewer than two annotations are skipped. With
/// `ignore_all_o`, tokens every annotator of the sentence labeled `O` are
/// dropped first, and sentences left without tokens are skipped too.
pub fn pairwise_kappa(corpus: &CrowdCorpus, ignore_all_o: bool, space: KappaLabels) -> Result<f64, CorpusError> {
    let mut total = 0.0;
    let mut sentences = 0usize;
    for e in &corpus.entries {
        if e.annotations.len() < 2 {
            continue;
        }
        let n = e.sentence.len();
        let mut labels: Vec<Vec<usize>> = e
            .annotations
            .iter()
            .map(|a| labels_for(&a.spans, n, space))
            .collect();
        if ignore_all_o {
            let keep: Vec<bool> = (0..n).map(|t| labels.iter().any(|l| l[t] != 0)).collect();
            for l in &mut labels {
                *l = l.iter().zip(&keep).filter(|(_, k)| **k).map(|(v, _)| *v).collect();
            }
            if labels[0].is_empty() {
                continue;
            }
        }
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..labels.len() {
            for j in i + 1..labels.len() {
                sum += cohen(&labels[i], &labels[j]);
                pairs += 1;
            }
        }
        total += sum / pairs as f64;
        sentences += 1;
    }
    if sentences == 0 {
        return Err(CorpusError::InsufficientOverlap);
    }
    Ok(total / sentences as f64)
}
