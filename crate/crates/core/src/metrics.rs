//! Span-level precision, recall and F1 under exact, proportional and binary
//! matching, plus length and sentence-category breakdowns.
//!
//! Scores are micro-averaged: numerators and denominators are summed over
//! all sentences before dividing.

use std::collections::BTreeMap;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::{Polarity, Span};

/// Spans per sentence id.
pub type SpanSet = BTreeMap<String, Vec<Span>>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("sentence {0} is present in only one of gold and prediction")]
    SentenceMismatch(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_ratio(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }
}

/// Summed per-span credit for one matching mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub pred_credit: f64,
    pub pred: usize,
    pub gold_credit: f64,
    pub gold: usize,
}

impl Counts {
    pub fn prf(&self) -> Prf {
        let p = if self.pred == 0 { 0.0 } else { self.pred_credit / self.pred as f64 };
        let r = if self.gold == 0 { 0.0 } else { self.gold_credit / self.gold as f64 };
        Prf::from_ratio(p, r)
    }

    pub fn merge(&mut self, other: &Counts) {
        self.pred_credit += other.pred_credit;
        self.pred += other.pred;
        self.gold_credit += other.gold_credit;
        self.gold += other.gold;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchMode {
    Exact,
    Proportional,
    Binary,
}

fn best_overlap(span: &Span, others: &[Span]) -> usize {
    others
        .iter()
        .filter(|o| o.polarity == span.polarity)
        .map(|o| span.overlap(o))
        .max()
        .unwrap_or(0)
}

/// Credits for one sentence.
pub fn sentence_counts(gold: &[Span], pred: &[Span], mode: MatchMode) -> Counts {
    let mut c = Counts {
        pred: pred.len(),
        gold: gold.len(),
        ..Counts::default()
    };
    match mode {
        MatchMode::Exact => {
            let mut used = vec![false; gold.len()];
            let mut matched = 0usize;
            for p in pred {
                if let Some(i) = gold.iter().enumerate().position(|(i, g)| !used[i] && g == p) {
                    used[i] = true;
                    matched += 1;
                }
            }
            c.pred_credit = matched as f64;
            c.gold_credit = matched as f64;
        }
        MatchMode::Proportional => {
            c.pred_credit = pred.iter().map(|p| best_overlap(p, gold) as f64 / p.len() as f64).sum();
            c.gold_credit = gold.iter().map(|g| best_overlap(g, pred) as f64 / g.len() as f64).sum();
        }
        MatchMode::Binary => {
            c.pred_credit = pred.iter().filter(|p| best_overlap(p, gold) > 0).count() as f64;
            c.gold_credit = gold.iter().filter(|g| best_overlap(g, pred) > 0).count() as f64;
        }
    }
    c
}

fn check_keys(gold: &SpanSet, pred: &SpanSet) -> Result<(), MetricsError> {
    for k in gold.keys() {
        if !pred.contains_key(k) {
            return Err(MetricsError::SentenceMismatch(k.clone()));
        }
    }
    for k in pred.keys() {
        if !gold.contains_key(k) {
            return Err(MetricsError::SentenceMismatch(k.clone()));
        }
    }
    Ok(())
}

pub fn corpus_counts(gold: &SpanSet, pred: &SpanSet, mode: MatchMode) -> Result<Counts, MetricsError> {
    check_keys(gold, pred)?;
    let mut total = Counts::default();
    for (id, g) in gold {
        total.merge(&sentence_counts(g, &pred[id], mode));
    }
    Ok(total)
}

pub fn exact_prf(gold: &SpanSet, pred: &SpanSet) -> Result<Prf, MetricsError> {
    Ok(corpus_counts(gold, pred, MatchMode::Exact)?.prf())
}

pub fn proportional_prf(gold: &SpanSet, pred: &SpanSet) -> Result<Prf, MetricsError> {
    Ok(corpus_counts(gold, pred, MatchMode::Proportional)?.prf())
}

pub fn binary_prf(gold: &SpanSet, pred: &SpanSet) -> Result<Prf, MetricsError> {
    Ok(corpus_counts(gold, pred, MatchMode::Binary)?.prf())
}

/// Scores under all three matching modes.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub gold_spans: usize,
    pub pred_spans: usize,
    pub exact: Prf,
    pub proportional: Prf,
    pub binary: Prf,
}

impl Serialize for EvalReport {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(11))?;
        m.serialize_entry("gold_spans", &self.gold_spans)?;
        m.serialize_entry("pred_spans", &self.pred_spans)?;
        for (name, prf) in [
            ("exact", &self.exact),
            ("proportional", &self.proportional),
            ("binary", &self.binary),
        ] {
            m.serialize_entry(&format!("{name}_precision"), &prf.precision)?;
            m.serialize_entry(&format!("{name}_recall"), &prf.recall)?;
            m.serialize_entry(&format!("{name}_f1"), &prf.f1)?;
        }
        m.end()
    }
}

pub fn evaluate(gold: &SpanSet, pred: &SpanSet) -> Result<EvalReport, MetricsError> {
    let exact = corpus_counts(gold, pred, MatchMode::Exact)?;
    let proportional = corpus_counts(gold, pred, MatchMode::Proportional)?;
    let binary = corpus_counts(gold, pred, MatchMode::Binary)?;
    Ok(EvalReport {
        gold_spans: exact.gold,
        pred_spans: exact.pred,
        exact: exact.prf(),
        proportional: proportional.prf(),
        binary: binary.prf(),
    })
}

/// Number of length buckets: lengths 1 through 6, then 7 and longer.
pub const LENGTH_BUCKETS: usize = 7;

pub fn length_bucket(len: usize) -> usize {
    len.clamp(1, LENGTH_BUCKETS) - 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SentenceCategory {
    /// Exactly one gold opinion.
    #[serde(rename = "O")]
    Single,
    /// Several opinions, all of one polarity.
    #[serde(rename = "MOSP")]
    MultiSamePolarity,
    /// Both polarities present.
    #[serde(rename = "MOCP")]
    MultiMixedPolarity,
}

impl SentenceCategory {
    pub fn of(gold: &[Span]) -> Option<Self> {
        let has = |p| gold.iter().any(|s| s.polarity == p);
        match gold.len() {
            0 => None,
            1 => Some(Self::Single),
            _ if has(Polarity::Pos) && has(Polarity::Neg) => Some(Self::MultiMixedPolarity),
            _ => Some(Self::MultiSamePolarity),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketScore {
    pub counts: Counts,
    pub f1: f64,
}

impl BucketScore {
    fn from_counts(counts: Counts) -> Self {
        Self { f1: counts.prf().f1, counts }
    }
}

/// Exact-match scores split by span length and by sentence category.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BreakdownReport {
    /// Index `i` holds spans of length `i + 1`; the last bucket is `>= 7`.
    pub by_length: Vec<BucketScore>,
    pub by_category: BTreeMap<SentenceCategory, BucketScore>,
}

/// Length buckets split gold spans by their own length and predicted spans
/// by theirs, so bucket counters sum to the corpus counters. Sentences
/// without gold opinions are left out of the category table.
pub fn breakdown(gold: &SpanSet, pred: &SpanSet) -> Result<BreakdownReport, MetricsError> {
    check_keys(gold, pred)?;
    let mut lengths = vec![Counts::default(); LENGTH_BUCKETS];
    let mut categories: BTreeMap<SentenceCategory, Counts> = BTreeMap::new();
    for (id, g) in gold {
        let p = &pred[id];
        for (b, counts) in lengths.iter_mut().enumerate() {
            let gb: Vec<Span> = g.iter().filter(|s| length_bucket(s.len()) == b).copied().collect();
            let pb: Vec<Span> = p.iter().filter(|s| length_bucket(s.len()) == b).copied().collect();
            counts.merge(&sentence_counts(&gb, &pb, MatchMode::Exact));
        }
        if let Some(cat) = SentenceCategory::of(g) {
            categories
                .entry(cat)
                .or_default()
                .merge(&sentence_counts(g, p, MatchMode::Exact));
        }
    }
    Ok(BreakdownReport {
        by_length: lengths.into_iter().map(BucketScore::from_counts).collect(),
        by_category: categories
            .into_iter()
            .map(|(k, v)| (k, BucketScore::from_counts(v)))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Polarity::*;

    fn one(spans: Vec<Span>) -> SpanSet {
        BTreeMap::from([("s".to_string(), spans)])
    }

    #[test]
    fn exact_examples() {
        let g = one(vec![Span::new(1, 4, Pos)]);
        assert_eq!(exact_prf(&g, &g).unwrap(), Prf::from_ratio(1.0, 1.0));
        let z = Prf::default();
        assert_eq!(exact_prf(&g, &one(vec![Span::new(1, 3, Pos)])).unwrap(), z);
        assert_eq!(exact_prf(&g, &one(vec![Span::new(1, 4, Neg)])).unwrap(), z);
    }

    #[test]
    fn proportional_examples() {
        let g = one(vec![Span::new(0, 4, Pos)]);
        let r = proportional_prf(&g, &one(vec![Span::new(1, 4, Pos)])).unwrap();
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 0.75);
        assert!((r.f1 - 6.0 / 7.0).abs() < 1e-12);
        let d = proportional_prf(&g, &one(vec![Span::new(5, 7, Pos)])).unwrap();
        assert_eq!(d, Prf::default());
    }

    #[test]
    fn binary_examples() {
        let g = one(vec![Span::new(0, 4, Pos)]);
        assert_eq!(binary_prf(&g, &one(vec![Span::new(3, 6, Pos)])).unwrap().f1, 1.0);
        assert_eq!(binary_prf(&g, &one(vec![Span::new(3, 6, Neg)])).unwrap().f1, 0.0);
        let two = binary_prf(&g, &one(vec![Span::new(0, 1, Pos), Span::new(2, 3, Pos)])).unwrap();
        assert_eq!((two.precision, two.recall), (1.0, 1.0));
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let g = one(vec![Span::new(0, 4, Pos)]);
        let r = evaluate(&g, &one(vec![])).unwrap();
        assert_eq!(r.exact, Prf::default());
        assert_eq!(r.binary.recall, 0.0);
    }

    #[test]
    fn mismatched_sentences_rejected() {
        let g = one(vec![]);
        let p = BTreeMap::from([("t".to_string(), vec![])]);
        assert_eq!(exact_prf(&g, &p), Err(MetricsError::SentenceMismatch("s".into())));
    }

    #[test]
    fn categories() {
        assert_eq!(
            SentenceCategory::of(&[Span::new(0, 2, Pos), Span::new(5, 7, Neg)]),
            Some(SentenceCategory::MultiMixedPolarity)
        );
        assert_eq!(
            SentenceCategory::of(&[Span::new(0, 2, Neg), Span::new(5, 7, Neg)]),
            Some(SentenceCategory::MultiSamePolarity)
        );
        assert_eq!(SentenceCategory::of(&[Span::new(0, 2, Neg)]), Some(SentenceCategory::Single));
        assert_eq!(SentenceCategory::of(&[]), None);
    }

    #[test]
    fn only_populated_length_bucket() {
        let g = one(vec![Span::new(0, 3, Pos), Span::new(4, 7, Neg)]);
        let b = breakdown(&g, &g).unwrap();
        for (i, bucket) in b.by_length.iter().enumerate() {
            assert_eq!(bucket.counts.gold > 0, i == 2);
        }
        assert_eq!(b.by_category.len(), 1);
    }

    #[test]
    fn flat_json_keys() {
        let g = one(vec![Span::new(0, 3, Pos)]);
        let v = serde_json::to_value(evaluate(&g, &g).unwrap()).unwrap();
        assert_eq!(v["exact_f1"], 1.0);
        assert_eq!(v["binary_recall"], 1.0);
        assert_eq!(v.as_object().unwrap().len(), 11);
    }
}
