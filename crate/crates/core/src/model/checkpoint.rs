//! JSON checkpoints: config, annotator registry, vocabulary and every
//! parameter tensor by name.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, TaggerModel, Vocab};
use crate::corpus::AnnotatorRegistry;

pub const CHECKPOINT_FORMAT: &str = "crowdtag-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SavedParam {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Saved {
    format: String,
    version: u32,
    config: ModelConfig,
    annotators: Vec<String>,
    registry_fingerprint: String,
    annotator_conditioned: bool,
    vocab: Vec<String>,
    params: Vec<SavedParam>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl TaggerModel {
    pub fn to_json(&self) -> String {
        let saved = Saved {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            annotators: self.registry.ids().to_vec(),
            registry_fingerprint: self.registry.fingerprint(),
            annotator_conditioned: self.annotator_conditioned,
            vocab: self.vocab.tokens().to_vec(),
            params: self
                .params
                .iter()
                .map(|p| SavedParam {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    data: p.value.data().to_vec(),
                })
                .collect(),
        };
        serde_json::to_string(&saved).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let bad = |m: String| ModelError::Checkpoint(m);
        let saved: Saved = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if saved.format != CHECKPOINT_FORMAT {
            return Err(bad(format!("unexpected format {:?}", saved.format)));
        }
        if saved.version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {}", saved.version)));
        }
        let registry = AnnotatorRegistry::new(saved.annotators).map_err(|e| bad(e.to_string()))?;
        if registry.fingerprint() != saved.registry_fingerprint {
            return Err(bad("annotator registry fingerprint mismatch".into()));
        }
        let vocab = Vocab::from_saved(saved.vocab).ok_or_else(|| bad("malformed vocabulary".into()))?;
        let mut model = TaggerModel::zeroed(saved.config, vocab, registry)?;
        model.annotator_conditioned = saved.annotator_conditioned;
        if model.vocab.len() != model.config.vocab_size || model.registry.len() != model.config.annotators {
            return Err(bad("vocabulary or registry disagrees with config".into()));
        }
        if saved.params.len() != model.params.len() {
            return Err(bad(format!(
                "{} parameters stored, layout needs {}",
                saved.params.len(),
                model.params.len()
            )));
        }
        for (slot, p) in model.params.iter_mut().zip(saved.params) {
            if slot.name != p.name {
                return Err(bad(format!("expected parameter {}, found {}", slot.name, p.name)));
            }
            if slot.value.shape() != p.shape.as_slice() || p.data.len() != slot.value.len() {
                return Err(bad(format!("parameter {} has shape {:?}, expected {:?}", p.name, p.shape, slot.value.shape())));
            }
            if p.data.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("parameter {} holds non-finite values", p.name)));
            }
            slot.value.data_mut().copy_from_slice(&p.data);
        }
        Ok(model)
    }
}

pub fn save_checkpoint(model: &TaggerModel, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, model.to_json()).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<TaggerModel, ModelError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    TaggerModel::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::super::tests::tiny;
    use super::*;
    use crate::model::AnnotatorInput;

    #[test]
    fn round_trip_preserves_predictions() {
        let m = tiny(1, 3);
        let back = TaggerModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back.params, m.params);
        let s: Vec<String> = vec!["a".into(), "c".into()];
        assert_eq!(
            back.emissions(&s, &AnnotatorInput::Annotator(2)).unwrap(),
            m.emissions(&s, &AnnotatorInput::Annotator(2)).unwrap()
        );
    }

    #[test]
    fn rejects_tampered_shapes() {
        let m = tiny(1, 2);
        let text = m.to_json().replacen("\"shape\":[4,8]", "\"shape\":[8,4]", 1);
        assert!(TaggerModel::from_json(&text).is_err());
        assert!(TaggerModel::from_json("{}").is_err());
    }
}
