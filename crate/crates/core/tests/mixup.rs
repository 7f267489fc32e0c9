mod common;

use common::{annotator_index, mix_instance, mix_model, mix_sentence, swapped, two_pass_loss};
use crowdtag::mixup::{mixed_loss, MixupInstance};
use crowdtag::model::AnnotatorInput;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn endpoints_reduce_to_one_annotator() {
    let m = mix_model(31);
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..100 {
        let s = mix_sentence(&mut rng);
        let one = mix_instance(&mut rng, s.len(), 1.0);
        let single = m.nll(&s, &AnnotatorInput::Annotator(annotator_index(&one.first)), &one.labels_first).unwrap();
        assert_eq!(mixed_loss(&m, &s, &one).unwrap().to_bits(), single.to_bits());
        let zero = MixupInstance { lambda: 0.0, ..one };
        let single = m.nll(&s, &AnnotatorInput::Annotator(annotator_index(&zero.second)), &zero.labels_second).unwrap();
        assert_eq!(mixed_loss(&m, &s, &zero).unwrap().to_bits(), single.to_bits());
    }
}

#[test]
fn swapping_annotators_mirrors_lambda() {
    let m = mix_model(33);
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..100 {
        let s = mix_sentence(&mut rng);
        let lambda = rng.random_range(0.0..1.0);
        let inst = mix_instance(&mut rng, s.len(), lambda);
        assert_eq!(mixed_loss(&m, &s, &inst).unwrap(), mixed_loss(&m, &s, &swapped(&inst)).unwrap());
    }
}

/// One forward pass on the interpolated embedding, two label sequences.
#[test]
fn agrees_with_two_separate_passes() {
    let m = mix_model(35);
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    for _ in 0..100 {
        let s = mix_sentence(&mut rng);
        let lambda = rng.random_range(0.0..1.0);
        let inst = mix_instance(&mut rng, s.len(), lambda);
        let (got, want) = (mixed_loss(&m, &s, &inst).unwrap(), two_pass_loss(&m, &s, &inst));
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}
