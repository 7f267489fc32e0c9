use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{CrowdCorpus, Polarity};

/// Summary counts of a corpus split. Crowd and gold spans are counted
/// separately; averages are zero when their denominator is.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub sentences: usize,
    /// One per (sentence, annotator) pair.
    pub annotations: usize,
    pub annotators: usize,
    pub positive: usize,
    pub negative: usize,
    pub avg_span_len: f64,
    pub avg_annotators_per_sentence: f64,
    pub avg_sentences_per_annotator: f64,
    pub gold_sentences: usize,
    pub gold_positive: usize,
    pub gold_negative: usize,
    pub gold_avg_span_len: f64,
}

fn ratio(num: f64, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

pub fn corpus_stats(corpus: &CrowdCorpus) -> StatsReport {
    let mut r = StatsReport {
        sentences: corpus.len(),
        ..StatsReport::default()
    };
    let mut annotators = HashSet::new();
    let mut span_tokens = 0usize;
    let mut gold_tokens = 0usize;
    for e in &corpus.entries {
        for a in &e.annotations {
            r.annotations += 1;
            annotators.insert(a.annotator_id.as_str());
            for s in &a.spans {
                span_tokens += s.len();
                match s.polarity {
                    Polarity::Pos => r.positive += 1,
                    Polarity::Neg => r.negative += 1,
                }
            }
        }
        if let Some(g) = &e.gold {
            r.gold_sentences += 1;
            for s in &g.spans {
                gold_tokens += s.len();
                match s.polarity {
                    Polarity::Pos => r.gold_positive += 1,
                    Polarity::Neg => r.gold_negative += 1,
                }
            }
        }
    }
    r.annotators = annotators.len();
    r.avg_span_len = ratio(span_tokens as f64, r.positive + r.negative);
    r.gold_avg_span_len = ratio(gold_tokens as f64, r.gold_positive + r.gold_negative);
    r.avg_annotators_per_sentence = ratio(r.annotations as f64, r.sentences);
    r.avg_sentences_per_annotator = ratio(r.annotations as f64, r.annotators);
    r
}
