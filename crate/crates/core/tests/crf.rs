//! CRF normalization and decoding checked by exhaustive enumeration.

mod common;

use common::{all_paths, brute_force_best, path_score, random_crf, TAGS};
use crowdtag::model::crf::{log_partition, nll, viterbi};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn probabilities_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for draw in 0..50 {
        let n = 1 + draw % 4;
        let (e, crf) = random_crf(n, &mut rng);
        let z = log_partition(&e, &crf).unwrap();
        let paths = all_paths(n);
        let total: f64 = paths.iter().map(|p| (path_score(&e, &crf, p) - z).exp()).sum();
        assert!((total - 1.0).abs() < 1e-6, "draw {draw}: total {total}");
        // the loss is the negative log of that same probability
        let p = &paths[draw % TAGS.pow(n as u32)];
        assert!((nll(&e, &crf, p).unwrap() - (z - path_score(&e, &crf, p))).abs() < 1e-9);
    }
}

#[test]
fn viterbi_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..100 {
        let n = rng.random_range(1..=5);
        let (e, crf) = random_crf(n, &mut rng);
        assert_eq!(viterbi(&e, &crf).unwrap(), brute_force_best(&e, &crf), "case {case}");
    }
}
