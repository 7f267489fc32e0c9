//! Multi-annotator span corpora: data model, JSONL I/O, majority voting,
//! agreement and summary statistics.

mod io;
mod kappa;
mod stats;
mod vote;

pub use io::{load_corpus, load_registry, save_corpus, save_registry, split_path, REGISTRY_FILE};
pub use kappa::{pairwise_kappa, KappaLabels};
pub use stats::{corpus_stats, StatsReport};
pub use vote::{majority_vote, MAJORITY_ANNOTATOR};

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Annotator id used for expert (gold) annotations.
pub const GOLD_ANNOTATOR: &str = "gold";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sentence {sentence}: {message}")]
    Invalid { sentence: String, message: String },
    #[error("sentence {sentence}: annotator {annotator} has overlapping or unsorted spans")]
    Overlap { sentence: String, annotator: String },
    #[error("annotator {0} is not in the registry")]
    UnknownAnnotator(String),
    #[error("insufficient overlap: no sentence has two or more annotations to compare")]
    InsufficientOverlap,
    #[error("registry: {0}")]
    Registry(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "POS")]
    Pos,
    #[serde(rename = "NEG")]
    Neg,
}

impl Polarity {
    pub fn flipped(self) -> Self {
        match self {
            Self::Pos => Self::Neg,
            Self::Neg => Self::Pos,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pos => "POS",
            Self::Neg => "NEG",
        })
    }
}

/// Half-open token interval `[start, end)` carrying a polarity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub polarity: Polarity,
}

impl Span {
    pub fn new(start: usize, end: usize, polarity: Polarity) -> Self {
        Self { start, end, polarity }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Number of shared tokens with `other`, ignoring polarity.
    pub fn overlap(&self, other: &Span) -> usize {
        self.end.min(other.end).saturating_sub(self.start.max(other.start))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One annotator's answer for one sentence. An empty span list means the
/// annotator saw no opinion expression.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Annotation {
    pub annotator_id: String,
    pub spans: Vec<Span>,
}

impl Annotation {
    pub fn new(annotator_id: impl Into<String>, spans: Vec<Span>) -> Self {
        Self {
            annotator_id: annotator_id.into(),
            spans,
        }
    }

    /// Checks ordering, non-overlap and bounds against a sentence length.
    pub fn check(&self, len: usize) -> Result<(), String> {
        let mut prev_end = 0;
        for s in &self.spans {
            if s.start >= s.end {
                return Err(format!("empty span [{}, {})", s.start, s.end));
            }
            if s.end > len {
                return Err(format!("span [{}, {}) exceeds sentence length {len}", s.start, s.end));
            }
            if s.start < prev_end {
                return Err("overlap".into());
            }
            prev_end = s.end;
        }
        Ok(())
    }
}

/// Ordered annotator ids with dense indices `0..len`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnnotatorRegistry {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl AnnotatorRegistry {
    pub fn new(ids: Vec<String>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(CorpusError::Registry(format!("duplicate annotator id {id}")));
            }
        }
        Ok(Self { ids, index })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> Option<&str> {
        self.ids.get(index).map(String::as_str)
    }

    /// Appends `id` if unseen and returns its index.
    pub fn register(&mut self, id: &str) -> usize {
        if let Some(i) = self.index_of(id) {
            return i;
        }
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), self.ids.len() - 1);
        self.ids.len() - 1
    }

    /// Hex SHA-256 over the ordered ids, used to tie checkpoints to a registry.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for id in &self.ids {
            h.update(id.as_bytes());
            h.update([0u8]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A sentence with its crowd annotations and optional gold answer.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub sentence: Sentence,
    pub annotations: Vec<Annotation>,
    pub gold: Option<Annotation>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CrowdCorpus {
    pub entries: Vec<Entry>,
    pub registry: AnnotatorRegistry,
}

impl CrowdCorpus {
    pub fn new(entries: Vec<Entry>, registry: AnnotatorRegistry) -> Result<Self, CorpusError> {
        let corpus = Self { entries, registry };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.entries.iter().map(|e| &e.sentence)
    }

    pub fn get(&self, id: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.sentence.id == id)
    }

    pub fn has_gold(&self) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(|e| e.gold.is_some())
    }

    pub fn annotation_count(&self) -> usize {
        self.entries.iter().map(|e| e.annotations.len()).sum()
    }

    /// Enforces every corpus invariant.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = HashMap::new();
        for e in &self.entries {
            let sid = &e.sentence.id;
            if e.sentence.tokens.is_empty() {
                return Err(CorpusError::Invalid {
                    sentence: sid.clone(),
                    message: "empty token list".into(),
                });
            }
            if seen.insert(sid.as_str(), ()).is_some() {
                return Err(CorpusError::Invalid {
                    sentence: sid.clone(),
                    message: "duplicate sentence id".into(),
                });
            }
            let n = e.sentence.len();
            let mut annotators = HashMap::new();
            for a in e.annotations.iter().chain(e.gold.iter()) {
                check_annotation(sid, a, n)?;
            }
            for a in &e.annotations {
                if self.registry.index_of(&a.annotator_id).is_none() {
                    return Err(CorpusError::UnknownAnnotator(a.annotator_id.clone()));
                }
                if annotators.insert(a.annotator_id.as_str(), ()).is_some() {
                    return Err(CorpusError::Invalid {
                        sentence: sid.clone(),
                        message: format!("annotator {} appears twice", a.annotator_id),
                    });
                }
            }
        }
        Ok(())
    }

    /// Sorts annotations by registry index and spans by start.
    pub fn canonicalize(&mut self) {
        let reg = &self.registry;
        for e in &mut self.entries {
            e.annotations
                .sort_by_key(|a| reg.index_of(&a.annotator_id).unwrap_or(usize::MAX));
            for a in e.annotations.iter_mut().chain(e.gold.iter_mut()) {
                a.spans.sort();
            }
        }
    }

    /// Gold annotations of every sentence, if all are present.
    pub fn gold(&self) -> Option<Vec<&Annotation>> {
        self.entries.iter().map(|e| e.gold.as_ref()).collect()
    }
}

fn check_annotation(sid: &str, a: &Annotation, n: usize) -> Result<(), CorpusError> {
    a.check(n).map_err(|message| {
        if message == "overlap" {
            CorpusError::Overlap {
                sentence: sid.to_string(),
                annotator: a.annotator_id.clone(),
            }
        } else {
            CorpusError::Invalid {
                sentence: sid.to_string(),
                message: format!("annotator {}: {message}", a.annotator_id),
            }
        }
    })
}
