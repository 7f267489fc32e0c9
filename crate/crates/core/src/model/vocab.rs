use std::collections::{BTreeSet, HashMap};

use crate::corpus::CrowdCorpus;

pub const UNK: &str = "[UNK]";

/// Token vocabulary; index 0 is reserved for unknown tokens and the rest
/// are sorted so the mapping does not depend on corpus order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let set: BTreeSet<String> = tokens.into_iter().filter(|t| t != UNK).collect();
        let tokens: Vec<String> = std::iter::once(UNK.to_string()).chain(set).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    pub fn from_corpus(corpus: &CrowdCorpus) -> Self {
        Self::from_tokens(corpus.sentences().flat_map(|s| s.tokens.iter().cloned()))
    }

    /// Rebuilds a vocabulary saved with [`Vocab::tokens`]; the order must
    /// be the stored one.
    pub(crate) fn from_saved(tokens: Vec<String>) -> Option<Self> {
        if tokens.first().map(String::as_str) != Some(UNK) {
            return None;
        }
        let index: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        (index.len() == tokens.len()).then_some(Self { tokens, index })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_with_unknown_first() {
        let v = Vocab::from_tokens(["b", "a", "b"].iter().map(|s| s.to_string()));
        assert_eq!(v.tokens(), &[UNK, "a", "b"]);
        assert_eq!(v.id("b"), 2);
        assert_eq!(v.id("zebra"), 0);
    }

    #[test]
    fn saved_order_round_trips() {
        let v = Vocab::from_tokens(["x", "y"].iter().map(|s| s.to_string()));
        assert_eq!(Vocab::from_saved(v.tokens().to_vec()), Some(v));
        assert_eq!(Vocab::from_saved(vec!["x".into()]), None);
    }
}
