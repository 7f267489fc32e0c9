//! Synthetic crowd corpora with per-annotator noise.
//!
//! Gold sentences plant opinion expressions built from polarity-specific
//! lexicons among neutral filler tokens. Each crowd annotation is the gold
//! answer passed through one annotator's [`NoiseProfile`]. Every random
//! decision draws from a stream derived from the master seed and the
//! (split, sentence, annotator) coordinates, so adding annotators or
//! sentences never perturbs existing ones.

use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    Annotation, AnnotatorRegistry, CrowdCorpus, Entry, Polarity, Sentence, Span, GOLD_ANNOTATOR,
};

/// Longest spurious span an annotator invents.
pub const SPURIOUS_MAX_LEN: usize = 3;

const PACKING_ATTEMPTS: usize = 100;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("sentence {index}: could not pack {expressions} expressions in {PACKING_ATTEMPTS} attempts")]
    Packing { index: usize, expressions: usize },
    #[error("config file {path}: {message}")]
    File { path: String, message: String },
}

/// How boundary shifts pick their direction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftMode {
    /// Each shifted boundary moves left or right with equal probability.
    #[default]
    Random,
    /// Shifted boundaries move outward (the span grows).
    Expand,
    /// Shifted boundaries move inward (the span shrinks, never to empty).
    Contract,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub annotator_id: String,
    pub miss_prob: f64,
    pub boundary_shift_prob: f64,
    pub max_shift: usize,
    pub flip_prob: f64,
    /// Expected spurious spans per sentence.
    pub spurious_rate: f64,
    #[serde(default)]
    pub shift_mode: ShiftMode,
}

impl NoiseProfile {
    pub fn noiseless(annotator_id: impl Into<String>) -> Self {
        Self {
            annotator_id: annotator_id.into(),
            miss_prob: 0.0,
            boundary_shift_prob: 0.0,
            max_shift: 1,
            flip_prob: 0.0,
            spurious_rate: 0.0,
            shift_mode: ShiftMode::Random,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let probs = [
            ("miss_prob", self.miss_prob),
            ("boundary_shift_prob", self.boundary_shift_prob),
            ("flip_prob", self.flip_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::Config(format!(
                    "{}: {name} = {p} outside [0, 1]",
                    self.annotator_id
                )));
            }
        }
        if !(self.spurious_rate >= 0.0 && self.spurious_rate.is_finite()) {
            return Err(SimError::Config(format!("{}: spurious_rate must be >= 0", self.annotator_id)));
        }
        if self.max_shift == 0 {
            return Err(SimError::Config(format!("{}: max_shift must be positive", self.annotator_id)));
        }
        Ok(())
    }
}

/// Mean noise rates of an annotator population.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRates {
    pub miss: f64,
    pub shift: f64,
    pub flip: f64,
    pub spurious: f64,
}

impl NoiseRates {
    /// Rates of the standard noisy benchmark.
    pub const STANDARD: NoiseRates = NoiseRates {
        miss: 0.15,
        shift: 0.3,
        flip: 0.05,
        spurious: 0.1,
    };
}

/// `count` heterogeneous profiles whose rates scatter uniformly within
/// `±spread` (relative) of `rates`; shift modes cycle through
/// random, expand and contract.
pub fn population(count: usize, rates: NoiseRates, spread: f64, seed: u64) -> Vec<NoiseProfile> {
    let modes = [ShiftMode::Random, ShiftMode::Expand, ShiftMode::Contract];
    (0..count)
        .map(|i| {
            let mut rng = stream(seed, &[0x5052_4f46, i as u64]);
            let mut jitter = |base: f64| (base * (1.0 + spread * rng.random_range(-1.0..=1.0))).clamp(0.0, 1.0);
            NoiseProfile {
                annotator_id: format!("w{:03}", i + 1),
                miss_prob: jitter(rates.miss),
                boundary_shift_prob: jitter(rates.shift),
                max_shift: 1,
                flip_prob: jitter(rates.flip),
                spurious_rate: rates.spurious * (1.0 + spread * rng.random_range(-1.0..=1.0)),
                shift_mode: modes[i % modes.len()],
            }
        })
        .collect()
}

/// Inclusive integer range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Range {
    pub min: usize,
    pub max: usize,
}

impl Range {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

/// Distribution of planted expressions per sentence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExpressionCount {
    Fixed { count: usize },
    /// Binomial over `max` trials with the given mean.
    Binomial { max: usize, mean: f64 },
}

impl ExpressionCount {
    fn sample(&self, rng: &mut impl Rng) -> usize {
        match *self {
            Self::Fixed { count } => count,
            Self::Binomial { max, mean } => {
                let p = mean / max as f64;
                (0..max).filter(|_| rng.random_bool(p)).count()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub neutral_vocab: usize,
    pub positive_vocab: usize,
    pub negative_vocab: usize,
    pub sentence_len: Range,
    pub expressions: ExpressionCount,
    pub expression_len: Range,
    /// Share of planted expressions that are negative.
    pub negative_share: f64,
    pub annotators_per_sentence: Range,
    pub train_sentences: usize,
    pub dev_sentences: usize,
    pub test_sentences: usize,
    /// Attach gold answers to the training split as well.
    #[serde(default)]
    pub gold_on_train: bool,
    pub profiles: Vec<NoiseProfile>,
}

impl Default for SimConfig {
    /// 70 annotators at the standard noise rates, 3-5 per sentence,
    /// 2,000 sentences.
    fn default() -> Self {
        Self {
            seed: 1,
            neutral_vocab: 400,
            positive_vocab: 60,
            negative_vocab: 60,
            sentence_len: Range::new(8, 30),
            expressions: ExpressionCount::Binomial { max: 4, mean: 1.5 },
            expression_len: Range::new(1, 4),
            negative_share: 0.75,
            annotators_per_sentence: Range::new(3, 5),
            train_sentences: 1600,
            dev_sentences: 200,
            test_sentences: 200,
            gold_on_train: false,
            profiles: population(70, NoiseRates::STANDARD, 0.5, 1),
        }
    }
}

impl SimConfig {
    /// A single noiseless annotator.
    pub fn noiseless(seed: u64) -> Self {
        Self {
            seed,
            annotators_per_sentence: Range::new(1, 1),
            profiles: vec![NoiseProfile::noiseless("w001")],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.profiles.is_empty() {
            return bad("at least one noise profile is required");
        }
        for p in &self.profiles {
            p.validate()?;
        }
        for (name, r) in [
            ("sentence_len", self.sentence_len),
            ("expression_len", self.expression_len),
            ("annotators_per_sentence", self.annotators_per_sentence),
        ] {
            if r.min > r.max || r.min == 0 {
                return Err(SimError::Config(format!("{name}: empty or zero range")));
            }
        }
        if self.annotators_per_sentence.max > self.profiles.len() {
            return bad("annotators_per_sentence exceeds the number of profiles");
        }
        if self.neutral_vocab == 0 || self.positive_vocab == 0 || self.negative_vocab == 0 {
            return bad("vocabularies must be non-empty");
        }
        if !(0.0..=1.0).contains(&self.negative_share) {
            return bad("negative_share outside [0, 1]");
        }
        if let ExpressionCount::Binomial { max, mean } = self.expressions {
            if max == 0 || !(0.0..=max as f64).contains(&mean) {
                return bad("binomial expression count needs 0 <= mean <= max, max > 0");
            }
        }
        let mut reg = AnnotatorRegistry::default();
        for p in &self.profiles {
            if reg.index_of(&p.annotator_id).is_some() {
                return Err(SimError::Config(format!("duplicate profile {}", p.annotator_id)));
            }
            reg.register(&p.annotator_id);
        }
        Ok(())
    }

    pub fn registry(&self) -> AnnotatorRegistry {
        AnnotatorRegistry::new(self.profiles.iter().map(|p| p.annotator_id.clone()).collect())
            .expect("validated config has unique ids")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for a coordinate tuple under a master seed.
pub fn stream(seed: u64, coords: &[u64]) -> ChaCha8Rng {
    let key = coords.iter().fold(splitmix(seed), |acc, &c| splitmix(acc ^ splitmix(c)));
    ChaCha8Rng::seed_from_u64(key)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

fn polarity_token(p: Polarity, rng: &mut impl Rng, cfg: &SimConfig) -> String {
    match p {
        Polarity::Pos => format!("p{}", rng.random_range(0..cfg.positive_vocab)),
        Polarity::Neg => format!("n{}", rng.random_range(0..cfg.negative_vocab)),
    }
}

fn gold_sentence(cfg: &SimConfig, split: Split, index: usize) -> Result<(Sentence, Annotation), SimError> {
    let mut rng = stream(cfg.seed, &[split.tag(), index as u64, 0x474f_4c44]);
    let k = cfg.expressions.sample(&mut rng);
    for _ in 0..PACKING_ATTEMPTS {
        let len = cfg.sentence_len.sample(&mut rng);
        let lens: Vec<usize> = (0..k).map(|_| cfg.expression_len.sample(&mut rng)).collect();
        let needed = lens.iter().sum::<usize>() + k.saturating_sub(1);
        if needed > len {
            continue;
        }
        // free neutral tokens scattered over the k + 1 gaps; interior gaps
        // keep at least one separator
        let mut gaps = vec![0usize; k + 1];
        for g in gaps.iter_mut().take(k).skip(1) {
            *g = 1;
        }
        for _ in 0..len - needed {
            gaps[rng.random_range(0..=k)] += 1;
        }
        let mut tokens = Vec::with_capacity(len);
        let mut spans = Vec::with_capacity(k);
        for (i, &l) in lens.iter().enumerate() {
            for _ in 0..gaps[i] {
                tokens.push(format!("w{}", rng.random_range(0..cfg.neutral_vocab)));
            }
            let polarity = if rng.random_bool(cfg.negative_share) {
                Polarity::Neg
            } else {
                Polarity::Pos
            };
            let start = tokens.len();
            for _ in 0..l {
                tokens.push(polarity_token(polarity, &mut rng, cfg));
            }
            spans.push(Span::new(start, tokens.len(), polarity));
        }
        for _ in 0..gaps[k] {
            tokens.push(format!("w{}", rng.random_range(0..cfg.neutral_vocab)));
        }
        let sentence = Sentence {
            id: format!("{}-{index:05}", split.name()),
            tokens,
        };
        return Ok((sentence, Annotation::new(GOLD_ANNOTATOR, spans)));
    }
    Err(SimError::Packing { index, expressions: k })
}

/// `count` gold sentences of the training split's stream.
pub fn generate_gold(cfg: &SimConfig, count: usize) -> Result<Vec<(Sentence, Annotation)>, SimError> {
    cfg.validate()?;
    (0..count).map(|i| gold_sentence(cfg, Split::Train, i)).collect()
}

fn shifted(boundary: usize, delta: usize, outward_left: bool) -> isize {
    if outward_left {
        boundary as isize - delta as isize
    } else {
        boundary as isize + delta as isize
    }
}

/// Passes a gold annotation through one annotator's noise.
pub fn corrupt(gold: &Annotation, profile: &NoiseProfile, len: usize, rng: &mut impl Rng) -> Annotation {
    let mut out: Vec<Span> = Vec::with_capacity(gold.spans.len());
    for (i, g) in gold.spans.iter().enumerate() {
        if rng.random_bool(profile.miss_prob) {
            continue;
        }
        let lower = out.last().map_or(0, |s| s.end) as isize;
        let upper = gold.spans.get(i + 1).map_or(len, |s| s.start) as isize;
        let mut start = g.start as isize;
        let mut end = g.end as isize;
        if rng.random_bool(profile.boundary_shift_prob) {
            let d = rng.random_range(1..=profile.max_shift);
            let left = match profile.shift_mode {
                ShiftMode::Random => rng.random_bool(0.5),
                ShiftMode::Expand => true,
                ShiftMode::Contract => false,
            };
            start = shifted(g.start, d, left);
        }
        if rng.random_bool(profile.boundary_shift_prob) {
            let d = rng.random_range(1..=profile.max_shift);
            let left = match profile.shift_mode {
                ShiftMode::Random => rng.random_bool(0.5),
                ShiftMode::Expand => false,
                ShiftMode::Contract => true,
            };
            end = shifted(g.end, d, left);
        }
        let start = start.clamp(lower, upper - 1);
        let end = end.clamp(start + 1, upper);
        let polarity = if rng.random_bool(profile.flip_prob) {
            g.polarity.flipped()
        } else {
            g.polarity
        };
        out.push(Span::new(start as usize, end as usize, polarity));
    }
    if profile.spurious_rate > 0.0 {
        let extra = Poisson::new(profile.spurious_rate)
            .map(|d| d.sample(rng) as usize)
            .unwrap_or(0);
        for _ in 0..extra {
            let width = rng.random_range(1..=SPURIOUS_MAX_LEN);
            let polarity = if rng.random_bool(0.5) { Polarity::Pos } else { Polarity::Neg };
            let taken = |t: usize| {
                gold.spans.iter().chain(&out).any(|s| s.start <= t && t < s.end)
            };
            let starts: Vec<usize> = (0..len.saturating_sub(width - 1))
                .filter(|&s| (s..s + width).all(|t| !taken(t)))
                .collect();
            if starts.is_empty() {
                continue;
            }
            let s = starts[rng.random_range(0..starts.len())];
            out.push(Span::new(s, s + width, polarity));
            out.sort();
        }
    }
    Annotation::new(profile.annotator_id.clone(), out)
}

/// Ground-truth bookkeeping for one generated split.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub sentences: usize,
    pub gold_positive: usize,
    pub gold_negative: usize,
    pub annotations: usize,
    pub crowd_positive: usize,
    pub crowd_negative: usize,
    pub crowd_span_tokens: usize,
}

#[derive(Clone, Debug)]
pub struct SimulatedCorpus {
    pub train: CrowdCorpus,
    pub dev: CrowdCorpus,
    pub test: CrowdCorpus,
    pub summaries: [SplitSummary; 3],
}

impl SimulatedCorpus {
    pub fn split(&self, split: Split) -> &CrowdCorpus {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

fn generate_split(cfg: &SimConfig, split: Split, count: usize) -> Result<(CrowdCorpus, SplitSummary), SimError> {
    let registry = cfg.registry();
    let mut summary = SplitSummary {
        sentences: count,
        ..SplitSummary::default()
    };
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let (sentence, gold) = gold_sentence(cfg, split, i)?;
        for s in &gold.spans {
            match s.polarity {
                Polarity::Pos => summary.gold_positive += 1,
                Polarity::Neg => summary.gold_negative += 1,
            }
        }
        let mut pick_rng = stream(cfg.seed, &[split.tag(), i as u64, 0x5049_434b]);
        let k = cfg.annotators_per_sentence.sample(&mut pick_rng);
        let mut chosen = sample(&mut pick_rng, cfg.profiles.len(), k).into_vec();
        chosen.sort_unstable();
        let annotations: Vec<Annotation> = chosen
            .into_iter()
            .map(|p| {
                let mut rng = stream(cfg.seed, &[split.tag(), i as u64, 0x4e4f_4953, p as u64]);
                corrupt(&gold, &cfg.profiles[p], sentence.len(), &mut rng)
            })
            .collect();
        for a in &annotations {
            summary.annotations += 1;
            for s in &a.spans {
                summary.crowd_span_tokens += s.len();
                match s.polarity {
                    Polarity::Pos => summary.crowd_positive += 1,
                    Polarity::Neg => summary.crowd_negative += 1,
                }
            }
        }
        let attach = split != Split::Train || cfg.gold_on_train;
        entries.push(Entry {
            sentence,
            annotations,
            gold: attach.then_some(gold),
        });
    }
    let corpus = CrowdCorpus::new(entries, registry).map_err(|e| SimError::Config(e.to_string()))?;
    Ok((corpus, summary))
}

/// Train/dev/test splits with crowd annotations on every split and gold
/// answers on dev and test (and train under `gold_on_train`).
pub fn generate_corpus(cfg: &SimConfig) -> Result<SimulatedCorpus, SimError> {
    cfg.validate()?;
    let (train, s0) = generate_split(cfg, Split::Train, cfg.train_sentences)?;
    let (dev, s1) = generate_split(cfg, Split::Dev, cfg.dev_sentences)?;
    let (test, s2) = generate_split(cfg, Split::Test, cfg.test_sentences)?;
    Ok(SimulatedCorpus {
        train,
        dev,
        test,
        summaries: [s0, s1, s2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SimConfig {
        SimConfig {
            seed,
            train_sentences: 40,
            dev_sentences: 10,
            test_sentences: 10,
            ..SimConfig::default()
        }
    }

    #[test]
    fn zero_expressions_give_empty_gold() {
        let cfg = SimConfig {
            expressions: ExpressionCount::Fixed { count: 0 },
            ..small(3)
        };
        assert!(generate_gold(&cfg, 20).unwrap().iter().all(|(_, g)| g.spans.is_empty()));
    }

    #[test]
    fn gold_is_deterministic() {
        let a = generate_gold(&small(9), 30).unwrap();
        let b = generate_gold(&small(9), 30).unwrap();
        assert_eq!(a, b);
        let c = generate_gold(&small(10), 30).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn planted_count_concentrates() {
        let cfg = SimConfig {
            expressions: ExpressionCount::Binomial { max: 4, mean: 2.0 },
            ..small(5)
        };
        let total: usize = generate_gold(&cfg, 1000).unwrap().iter().map(|(_, g)| g.spans.len()).sum();
        assert!((total as f64 - 2000.0).abs() <= 100.0, "{total}");
    }

    #[test]
    fn infeasible_packing_errors() {
        let cfg = SimConfig {
            sentence_len: Range::new(3, 3),
            expressions: ExpressionCount::Fixed { count: 3 },
            expression_len: Range::new(2, 2),
            ..small(1)
        };
        assert!(matches!(generate_gold(&cfg, 1), Err(SimError::Packing { .. })));
    }

    fn gold() -> Annotation {
        Annotation::new(
            "gold",
            vec![Span::new(1, 3, Polarity::Pos), Span::new(5, 8, Polarity::Neg)],
        )
    }

    #[test]
    fn zero_profile_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = corrupt(&gold(), &NoiseProfile::noiseless("a"), 10, &mut rng);
        assert_eq!(out.spans, gold().spans);
    }

    #[test]
    fn certain_miss_empties() {
        let p = NoiseProfile {
            miss_prob: 1.0,
            ..NoiseProfile::noiseless("a")
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(corrupt(&gold(), &p, 10, &mut rng).spans.is_empty());
    }

    #[test]
    fn certain_flip_inverts_polarity_only() {
        let p = NoiseProfile {
            flip_prob: 1.0,
            ..NoiseProfile::noiseless("a")
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = corrupt(&gold(), &p, 10, &mut rng);
        for (o, g) in out.spans.iter().zip(&gold().spans) {
            assert_eq!((o.start, o.end), (g.start, g.end));
            assert_eq!(o.polarity, g.polarity.flipped());
        }
    }

    #[test]
    fn heavy_noise_stays_valid() {
        let p = NoiseProfile {
            annotator_id: "a".into(),
            miss_prob: 0.2,
            boundary_shift_prob: 1.0,
            max_shift: 3,
            flip_prob: 0.5,
            spurious_rate: 3.0,
            shift_mode: ShiftMode::Random,
        };
        for seed in 0..300 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = corrupt(&gold(), &p, 10, &mut rng);
            out.check(10).unwrap();
        }
    }

    #[test]
    fn systematic_shift_directions() {
        let mut p = NoiseProfile {
            boundary_shift_prob: 1.0,
            shift_mode: ShiftMode::Expand,
            ..NoiseProfile::noiseless("a")
        };
        let g = Annotation::new("gold", vec![Span::new(3, 5, Polarity::Pos)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(corrupt(&g, &p, 10, &mut rng).spans, vec![Span::new(2, 6, Polarity::Pos)]);
        p.shift_mode = ShiftMode::Contract;
        // a two-token span cannot shrink below one token
        assert_eq!(corrupt(&g, &p, 10, &mut rng).spans[0].len(), 1);
    }

    #[test]
    fn noiseless_crowd_equals_gold() {
        let cfg = SimConfig {
            train_sentences: 30,
            gold_on_train: true,
            ..SimConfig::noiseless(4)
        };
        let sim = generate_corpus(&cfg).unwrap();
        for e in &sim.train.entries {
            assert_eq!(e.annotations.len(), 1);
            assert_eq!(e.annotations[0].spans, e.gold.as_ref().unwrap().spans);
        }
    }

    #[test]
    fn fixed_annotator_count() {
        let cfg = SimConfig {
            annotators_per_sentence: Range::new(4, 4),
            ..small(2)
        };
        let sim = generate_corpus(&cfg).unwrap();
        assert!(sim.train.entries.iter().all(|e| e.annotations.len() == 4));
        assert!(sim.train.entries.iter().all(|e| e.gold.is_none()));
        assert!(sim.test.entries.iter().all(|e| e.gold.is_some()));
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = SimConfig::default();
        let back = SimConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.profiles.len(), 70);
    }

    #[test]
    fn invalid_probability_rejected() {
        let mut cfg = small(1);
        cfg.profiles[0].miss_prob = 1.5;
        assert!(matches!(cfg.validate(), Err(SimError::Config(_))));
    }
}
