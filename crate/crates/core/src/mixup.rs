//! Annotator mixup: two annotations of the same sentence, their annotator
//! embeddings interpolated and their losses mixed with the same weight.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CrowdCorpus;
use crate::model::{mix_weights, AnnotatorInput, Binder, ModelError, TaggerModel, TokenMask};
use crate::numeric::{Graph, Var};
use crate::tags;

#[derive(Debug, Error)]
pub enum MixupError {
    #[error("Beta parameter must be positive and finite, got {0}")]
    Alpha(f64),
    #[error("mixup pairs two distinct annotators, got {0} twice")]
    SameAnnotator(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("annotation does not fit its sentence: {0}")]
    Labels(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixupConfig {
    /// `lambda ~ Beta(alpha, alpha)`
    pub alpha: f64,
    /// Annotator pairs drawn per sentence and epoch.
    pub pairs_per_sentence: usize,
    /// Also mix during the first training stage.
    pub in_stage1: bool,
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            pairs_per_sentence: 1,
            in_stage1: false,
        }
    }
}

impl MixupConfig {
    pub fn validate(&self) -> Result<(), MixupError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(MixupError::Alpha(self.alpha));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixupInstance {
    /// Index of the sentence in its corpus.
    pub sentence: usize,
    pub first: String,
    pub second: String,
    pub labels_first: Vec<usize>,
    pub labels_second: Vec<usize>,
    pub lambda: f64,
}

impl MixupInstance {
    /// The same instance seen from the other annotator.
    pub fn swapped(&self) -> Self {
        Self {
            sentence: self.sentence,
            first: self.second.clone(),
            second: self.first.clone(),
            labels_first: self.labels_second.clone(),
            labels_second: self.labels_first.clone(),
            lambda: 1.0 - self.lambda,
        }
    }
}

/// One `Beta(alpha, alpha)` draw as `x / (x + y)` of two Gamma variates.
pub fn sample_lambda(alpha: f64, rng: &mut impl Rng) -> Result<f64, MixupError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(MixupError::Alpha(alpha));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|_| MixupError::Alpha(alpha))?;
    let x: f64 = gamma.sample(rng);
    let y: f64 = gamma.sample(rng);
    // both variates can underflow for very small alpha
    if x + y == 0.0 {
        return Ok(0.5);
    }
    Ok((x / (x + y)).clamp(0.0, 1.0))
}

fn labels(spans: &[crate::corpus::Span], len: usize) -> Result<Vec<usize>, MixupError> {
    tags::encode(spans, len)
        .map(|t| t.into_iter().map(|t| t.index()).collect())
        .map_err(|e| MixupError::Labels(e.to_string()))
}

/// Samples up to `pairs_per_sentence` distinct unordered annotator pairs per
/// sentence, each with a fresh `lambda`.
pub fn pair_instances(corpus: &CrowdCorpus, cfg: &MixupConfig, rng: &mut impl Rng) -> Result<Vec<MixupInstance>, MixupError> {
    cfg.validate()?;
    let mut out = Vec::new();
    if cfg.pairs_per_sentence == 0 {
        return Ok(out);
    }
    for (s, entry) in corpus.entries.iter().enumerate() {
        let anns = &entry.annotations;
        let k = anns.len();
        if k < 2 {
            continue;
        }
        let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
        let take = cfg.pairs_per_sentence.min(pairs.len());
        let len = entry.sentence.len();
        for p in sample(rng, pairs.len(), take) {
            let (i, j) = pairs[p];
            let lambda = sample_lambda(cfg.alpha, rng)?;
            out.push(MixupInstance {
                sentence: s,
                first: anns[i].annotator_id.clone(),
                second: anns[j].annotator_id.clone(),
                labels_first: labels(&anns[i].spans, len)?,
                labels_second: labels(&anns[j].spans, len)?,
                lambda,
            });
        }
    }
    Ok(out)
}

/// Mixed loss as a graph node: one forward pass under the interpolated
/// embedding, both label sequences scored against it.
pub fn mixed_loss_node(
    model: &TaggerModel,
    g: &mut Graph,
    b: &mut Binder,
    token_ids: &[usize],
    inst: &MixupInstance,
    mask: Option<&TokenMask>,
) -> Result<Var, MixupError> {
    if inst.first == inst.second {
        return Err(MixupError::SameAnnotator(inst.first.clone()));
    }
    let first = model.annotator_index(&inst.first)?;
    let second = model.annotator_index(&inst.second)?;
    let input = AnnotatorInput::Mix {
        first,
        second,
        lambda: inst.lambda,
    };
    let emissions = model.forward(g, b, token_ids, &input, mask)?;
    let (w1, w2) = mix_weights(inst.lambda);
    let loss = model.loss_node(
        g,
        b,
        emissions,
        &[(&inst.labels_first, w1), (&inst.labels_second, w2)],
    )?;
    Ok(loss)
}

/// `lambda * nll(y1) + (1 - lambda) * nll(y2)` under `e_mix`, evaluated
/// without gradients.
pub fn mixed_loss(model: &TaggerModel, tokens: &[String], inst: &MixupInstance) -> Result<f64, MixupError> {
    let mut g = Graph::new();
    let mut b = Binder::frozen(&model.params);
    let ids = model.token_ids(tokens);
    let v = mixed_loss_node(model, &mut g, &mut b, &ids, inst, None)?;
    Ok(g.value(v).item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Annotation, AnnotatorRegistry, Entry, Polarity, Sentence, Span};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corpus(annotators_per_sentence: &[usize]) -> CrowdCorpus {
        let ids: Vec<String> = (0..6).map(|i| format!("a{i}")).collect();
        let registry = AnnotatorRegistry::new(ids.clone()).unwrap();
        let entries = annotators_per_sentence
            .iter()
            .enumerate()
            .map(|(s, &k)| Entry {
                sentence: Sentence {
                    id: format!("s{s}"),
                    tokens: vec!["x".into(); 4],
                },
                annotations: (0..k)
                    .map(|a| Annotation::new(ids[a].clone(), vec![Span::new(a % 4, 4, Polarity::Pos)]))
                    .collect(),
                gold: None,
            })
            .collect();
        CrowdCorpus::new(entries, registry).unwrap()
    }

    #[test]
    fn lambda_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &alpha in &[0.01, 0.5, 1.0, 20.0] {
            for _ in 0..2000 {
                let l = sample_lambda(alpha, &mut rng).unwrap();
                assert!((0.0..=1.0).contains(&l));
            }
        }
        assert!(sample_lambda(0.0, &mut rng).is_err());
        assert!(sample_lambda(f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn uniform_at_alpha_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| sample_lambda(1.0, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
        // a uniform draw has variance 1/12
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let var: f64 = (0..n).map(|_| (sample_lambda(1.0, &mut rng).unwrap() - 0.5).powi(2)).sum::<f64>() / n as f64;
        assert!((var - 1.0 / 12.0).abs() < 0.002, "{var}");
    }

    #[test]
    fn symmetric_for_any_alpha() {
        for (seed, &alpha) in [0.2, 0.5, 3.0].iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
            let n = 50_000;
            let mean: f64 = (0..n).map(|_| sample_lambda(alpha, &mut rng).unwrap()).sum::<f64>() / n as f64;
            assert!((mean - 0.5).abs() < 0.01, "alpha {alpha}: {mean}");
        }
    }

    #[test]
    fn single_annotations_yield_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = corpus(&[1, 1, 0, 1]);
        assert!(pair_instances(&c, &MixupConfig::default(), &mut rng).unwrap().is_empty());
    }

    #[test]
    fn exhausts_all_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = corpus(&[4]);
        let cfg = MixupConfig {
            pairs_per_sentence: 6,
            ..Default::default()
        };
        let got = pair_instances(&c, &cfg, &mut rng).unwrap();
        assert_eq!(got.len(), 6);
        let mut pairs: Vec<(String, String)> = got
            .iter()
            .map(|i| {
                assert_ne!(i.first, i.second);
                if i.first < i.second {
                    (i.first.clone(), i.second.clone())
                } else {
                    (i.second.clone(), i.first.clone())
                }
            })
            .collect();
        pairs.sort();
        pairs.dedup();
        assert_eq!(pairs.len(), 6);
        let more = MixupConfig {
            pairs_per_sentence: 50,
            ..Default::default()
        };
        assert_eq!(pair_instances(&c, &more, &mut rng).unwrap().len(), 6);
    }

    #[test]
    fn seeded_pairing_reproduces() {
        let c = corpus(&[3, 5, 2, 1, 4]);
        let cfg = MixupConfig {
            pairs_per_sentence: 2,
            ..Default::default()
        };
        let a = pair_instances(&c, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = pair_instances(&c, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2 + 2 + 1 + 0 + 2);
    }
}
