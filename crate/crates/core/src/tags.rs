//! BIO label sequences over the two opinion polarities.

use serde::{Deserialize, Serialize};

use crate::corpus::{Polarity, Span};

/// The five tags, in their fixed dense-index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    O,
    BPos,
    IPos,
    BNeg,
    INeg,
}

impl Tag {
    pub const COUNT: usize = 5;
    pub const ALL: [Tag; Tag::COUNT] = [Tag::O, Tag::BPos, Tag::IPos, Tag::BNeg, Tag::INeg];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Tag> {
        Self::ALL.get(i).copied()
    }

    pub fn begin(p: Polarity) -> Tag {
        match p {
            Polarity::Pos => Tag::BPos,
            Polarity::Neg => Tag::BNeg,
        }
    }

    pub fn inside(p: Polarity) -> Tag {
        match p {
            Polarity::Pos => Tag::IPos,
            Polarity::Neg => Tag::INeg,
        }
    }

    pub fn polarity(self) -> Option<Polarity> {
        match self {
            Tag::O => None,
            Tag::BPos | Tag::IPos => Some(Polarity::Pos),
            Tag::BNeg | Tag::INeg => Some(Polarity::Neg),
        }
    }

    pub fn is_begin(self) -> bool {
        matches!(self, Tag::BPos | Tag::BNeg)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::O => "O",
            Tag::BPos => "B-POS",
            Tag::IPos => "I-POS",
            Tag::BNeg => "B-NEG",
            Tag::INeg => "I-NEG",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TagError {
    #[error("span [{start}, {end}) overlaps an earlier span")]
    Overlap { start: usize, end: usize },
    #[error("span [{start}, {end}) does not fit length {len}")]
    OutOfBounds { start: usize, end: usize, len: usize },
}

/// Labels `len` tokens: `B-X` at each span start, `I-X` inside, `O` elsewhere.
pub fn encode(spans: &[Span], len: usize) -> Result<Vec<Tag>, TagError> {
    let mut labels = vec![Tag::O; len];
    let mut sorted: Vec<&Span> = spans.iter().collect();
    sorted.sort();
    let mut prev_end = 0;
    for s in sorted {
        if s.start >= s.end || s.end > len {
            return Err(TagError::OutOfBounds {
                start: s.start,
                end: s.end,
                len,
            });
        }
        if s.start < prev_end {
            return Err(TagError::Overlap {
                start: s.start,
                end: s.end,
            });
        }
        labels[s.start] = Tag::begin(s.polarity);
        for l in &mut labels[s.start + 1..s.end] {
            *l = Tag::inside(s.polarity);
        }
        prev_end = s.end;
    }
    Ok(labels)
}

/// Collects maximal `B-X (I-X)*` runs. An `I-X` that does not continue a
/// run of polarity `X` starts a new span, as if it were `B-X`.
pub fn decode(labels: &[Tag]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<Span> = None;
    for (i, &tag) in labels.iter().enumerate() {
        match tag.polarity() {
            None => spans.extend(open.take()),
            Some(p) => match &mut open {
                Some(s) if !tag.is_begin() && s.polarity == p => s.end = i + 1,
                _ => {
                    spans.extend(open.take());
                    open = Some(Span::new(i, i + 1, p));
                }
            },
        }
    }
    spans.extend(open);
    spans
}

pub fn decode_indices(labels: &[usize]) -> Vec<Span> {
    let tags: Vec<Tag> = labels
        .iter()
        .map(|&i| Tag::from_index(i).expect("tag index in range"))
        .collect();
    decode(&tags)
}
