//! Training loop for the four crowd training modes, with early stopping on
//! dev exact F1 and the two-stage schedule for mixup.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{majority_vote, Annotation, CrowdCorpus};
use crate::crowdsim::stream;
use crate::metrics::{breakdown, evaluate, BreakdownReport, EvalReport, MetricsError, SpanSet};
use crate::mixup::{mixed_loss_node, pair_instances, MixupConfig, MixupError, MixupInstance};
use crate::model::{AnnotatorInput, Binder, ModelError, ParamGroup, ParamStore, TaggerModel, TokenMask};
use crate::numeric::{Graph, Tensor, TensorError};
use crate::tags;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("corpus does not support mode {mode}: {reason}")]
    Mode { mode: TrainMode, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mixup(#[from] MixupError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainMode {
    /// Every crowd annotation is an instance; the annotator is ignored.
    #[serde(rename = "ALL")]
    All,
    /// One majority-voted annotation per sentence.
    #[serde(rename = "MV")]
    Mv,
    /// Annotator-conditioned adapters, expert centroid at inference.
    #[serde(rename = "ADAPTER")]
    Adapter,
    /// As `Adapter`, plus a second stage with mixup instances.
    #[serde(rename = "ADAPTER_MIXUP")]
    AdapterMixup,
}

impl TrainMode {
    pub const ALL_MODES: [TrainMode; 4] = [TrainMode::All, TrainMode::Mv, TrainMode::Adapter, TrainMode::AdapterMixup];

    pub fn name(self) -> &'static str {
        match self {
            TrainMode::All => "ALL",
            TrainMode::Mv => "MV",
            TrainMode::Adapter => "ADAPTER",
            TrainMode::AdapterMixup => "ADAPTER_MIXUP",
        }
    }

    pub fn uses_annotators(self) -> bool {
        matches!(self, TrainMode::Adapter | TrainMode::AdapterMixup)
    }

    /// Annotator input used to predict with a model trained in this mode.
    pub fn inference_input(self) -> AnnotatorInput {
        if self.uses_annotators() {
            AnnotatorInput::Expert
        } else {
            AnnotatorInput::Agnostic
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Self::ALL_MODES
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| format!("unknown mode {s:?}; expected one of ALL, MV, ADAPTER, ADAPTER_MIXUP"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Maximum global gradient norm.
    pub grad_clip: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Epoch budget of the mixup stage.
    pub stage2_epochs: usize,
    /// Keep token embeddings, attention and feed-forward weights fixed.
    pub freeze_backbone: bool,
    pub mixup: MixupConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Adapter,
            learning_rate: 1e-3,
            batch_size: 64,
            grad_clip: 5.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            stage2_epochs: 50,
            freeze_backbone: false,
            mixup: MixupConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.grad_clip > 0.0) {
            return bad("grad_clip must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        self.mixup.validate()?;
        Ok(())
    }
}

/// Multiplicative token mask: each position kept with probability `1 - p`
/// and rescaled by `1 / (1 - p)`. `None` when nothing is dropped.
pub fn dropout_mask(n: usize, p: f64, rng: &mut impl Rng) -> Result<Option<TokenMask>, TrainError> {
    if !(0.0..1.0).contains(&p) {
        return Err(TrainError::Config(format!("dropout probability {p} outside [0, 1)")));
    }
    if p == 0.0 {
        return Ok(None);
    }
    let keep = 1.0 / (1.0 - p);
    let data = (0..n).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect();
    Ok(Some(TokenMask(Tensor::new(vec![n, 1], data)?)))
}

/// Zeroes whole rows of `reps` during training.
pub fn sequential_dropout(reps: &Tensor, p: f64, rng: &mut impl Rng, training: bool) -> Result<Tensor, TrainError> {
    if !(0.0..1.0).contains(&p) {
        return Err(TrainError::Config(format!("dropout probability {p} outside [0, 1)")));
    }
    if !training || p == 0.0 {
        return Ok(reps.clone());
    }
    if reps.rank() != 2 {
        return Err(TensorError::Rank {
            op: "sequential_dropout",
            expected: 2,
            shape: reps.shape().to_vec(),
        }
        .into());
    }
    let Some(TokenMask(mask)) = dropout_mask(reps.rows(), p, rng)? else {
        return Ok(reps.clone());
    };
    let cols = reps.cols();
    let mut out = reps.clone();
    for (row, m) in out.data_mut().chunks_mut(cols).zip(mask.data()) {
        row.iter_mut().for_each(|v| *v *= m);
    }
    Ok(out)
}

/// Returns the global L2 norm before clipping.
pub fn clip_gradients(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::sq_norm).sum::<f64>().sqrt();
    if norm > max_norm {
        let factor = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale_assign(factor));
    }
    norm
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl From<&TrainConfig> for AdamConfig {
    fn from(c: &TrainConfig) -> Self {
        Self {
            learning_rate: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            eps: c.eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        Self {
            m: params.zero_grads(),
            v: params.zero_grads(),
            step: 0,
        }
    }
}

/// Bias-corrected Adam update with a constant learning rate.
pub fn adam_step(params: &mut ParamStore, grads: &[Tensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<(), TrainError> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(TrainError::Config(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.value.shape() != g.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                left: p.value.shape().to_vec(),
                right: g.shape().to_vec(),
            }
            .into());
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        let w = p.value.data_mut();
        for (((w, &g), m), v) in w.iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// Stop after `patience` epochs without a strict improvement.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    pub since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            since_best: 0,
        }
    }

    /// Records a score; returns `(improved, stop)`.
    pub fn observe(&mut self, score: f64) -> (bool, bool) {
        let improved = self.best.is_none_or(|b| score > b);
        if improved {
            self.best = Some(score);
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        (improved, self.since_best >= self.patience)
    }

    /// Keeps the best score but restarts the patience counter.
    pub fn rearm(&mut self) {
        self.since_best = 0;
    }
}

/// One supervised training instance.
#[derive(Clone, Debug, PartialEq)]
pub enum Example {
    Single {
        sentence: usize,
        input: AnnotatorInput,
        labels: Vec<usize>,
    },
    Mix(MixupInstance),
}

impl Example {
    pub fn sentence(&self) -> usize {
        match self {
            Example::Single { sentence, .. } => *sentence,
            Example::Mix(m) => m.sentence,
        }
    }
}

fn label_indices(a: &Annotation, len: usize) -> Vec<usize> {
    // corpus validation already guarantees well-formed spans
    tags::encode(&a.spans, len)
        .expect("validated annotation")
        .into_iter()
        .map(|t| t.index())
        .collect()
}

/// Original (non-mixup) instances of a corpus for a mode.
pub fn build_examples(corpus: &CrowdCorpus, model: &TaggerModel, mode: TrainMode) -> Result<Vec<Example>, TrainError> {
    let mismatch = |reason: String| TrainError::Mode { mode, reason };
    if corpus.annotation_count() == 0 {
        return Err(mismatch("corpus has no crowd annotations".into()));
    }
    let mut out = Vec::new();
    for (s, entry) in corpus.entries.iter().enumerate() {
        let len = entry.sentence.len();
        if entry.annotations.is_empty() {
            continue;
        }
        match mode {
            TrainMode::All => {
                // ordered by content so annotator ids cannot influence training
                let mut labels: Vec<Vec<usize>> = entry.annotations.iter().map(|a| label_indices(a, len)).collect();
                labels.sort();
                out.extend(labels.into_iter().map(|labels| Example::Single {
                    sentence: s,
                    input: AnnotatorInput::Agnostic,
                    labels,
                }));
            }
            TrainMode::Mv => {
                let mv = majority_vote(&entry.annotations, len);
                out.push(Example::Single {
                    sentence: s,
                    input: AnnotatorInput::Agnostic,
                    labels: label_indices(&mv, len),
                });
            }
            TrainMode::Adapter | TrainMode::AdapterMixup => {
                for a in &entry.annotations {
                    let idx = model
                        .annotator_index(&a.annotator_id)
                        .map_err(|e| mismatch(e.to_string()))?;
                    out.push(Example::Single {
                        sentence: s,
                        input: AnnotatorInput::Annotator(idx),
                        labels: label_indices(a, len),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Token ids of every sentence in a corpus.
pub fn corpus_token_ids(model: &TaggerModel, corpus: &CrowdCorpus) -> Vec<Vec<usize>> {
    corpus.sentences().map(|s| model.token_ids(&s.tokens)).collect()
}

/// Accumulates the mean loss gradient of a batch and applies one clipped
/// Adam update. Returns the mean batch loss.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    model: &mut TaggerModel,
    token_ids: &[Vec<usize>],
    batch: &[&Example],
    adam: &mut AdamState,
    cfg: &TrainConfig,
    dropout: f64,
    rng: &mut impl Rng,
) -> Result<f64, TrainError> {
    let frozen_backbone = cfg.freeze_backbone;
    let trainable = move |g: ParamGroup| !(frozen_backbone && g == ParamGroup::Backbone);
    let mut acc = model.params.zero_grads();
    let weight = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for ex in batch {
        let ids = &token_ids[ex.sentence()];
        let mask = dropout_mask(ids.len(), dropout, rng)?;
        let mut g = Graph::new();
        let mut b = Binder::with_filter(&model.params, &trainable);
        let loss = match ex {
            Example::Single { input, labels, .. } => {
                let e = model.forward(&mut g, &mut b, ids, input, mask.as_ref())?;
                model.loss_node(&mut g, &mut b, e, &[(labels, 1.0)])?
            }
            Example::Mix(m) => mixed_loss_node(model, &mut g, &mut b, ids, m, mask.as_ref())?,
        };
        total += g.value(loss).item();
        let mut grads = g.backward(loss)?;
        b.collect(&mut grads, &mut acc, weight);
    }
    clip_gradients(&mut acc, cfg.grad_clip);
    adam_step(&mut model.params, &acc, adam, &AdamConfig::from(cfg))?;
    Ok(total * weight)
}

/// Predicted spans for every sentence of a corpus.
pub fn predict_corpus(model: &TaggerModel, corpus: &CrowdCorpus, input: &AnnotatorInput) -> Result<SpanSet, TrainError> {
    let mut out = SpanSet::new();
    for s in corpus.sentences() {
        out.insert(s.id.clone(), model.predict_spans(&s.tokens, input)?);
    }
    Ok(out)
}

/// Reference annotations for scoring.
#[derive(Clone, Debug, PartialEq)]
pub enum Reference {
    Gold,
    /// Sentence-level majority vote of the crowd.
    Majority,
    /// One annotator's own labels, on the sentences they annotated.
    Crowd(String),
}

/// Reference spans, or `None` when the corpus lacks them.
pub fn reference_spans(corpus: &CrowdCorpus, reference: &Reference) -> Option<SpanSet> {
    match reference {
        Reference::Gold => corpus.gold().map(|g| {
            corpus
                .entries
                .iter()
                .zip(g)
                .map(|(e, a)| (e.sentence.id.clone(), a.spans.clone()))
                .collect()
        }),
        Reference::Majority => Some(
            corpus
                .entries
                .iter()
                .map(|e| (e.sentence.id.clone(), majority_vote(&e.annotations, e.sentence.len()).spans))
                .collect(),
        ),
        Reference::Crowd(id) => {
            let set: SpanSet = corpus
                .entries
                .iter()
                .filter_map(|e| {
                    e.annotations
                        .iter()
                        .find(|a| &a.annotator_id == id)
                        .map(|a| (e.sentence.id.clone(), a.spans.clone()))
                })
                .collect();
            (!set.is_empty()).then_some(set)
        }
    }
}

/// Scores the model under `input` against `reference`, predicting only the
/// sentences the reference covers.
pub fn evaluate_model(
    model: &TaggerModel,
    corpus: &CrowdCorpus,
    input: &AnnotatorInput,
    reference: &Reference,
) -> Result<Option<(EvalReport, BreakdownReport)>, TrainError> {
    let Some(gold) = reference_spans(corpus, reference) else {
        return Ok(None);
    };
    let mut pred = SpanSet::new();
    for e in &corpus.entries {
        if gold.contains_key(&e.sentence.id) {
            pred.insert(e.sentence.id.clone(), model.predict_spans(&e.sentence.tokens, input)?);
        }
    }
    Ok(Some((evaluate(&gold, &pred)?, breakdown(&gold, &pred)?)))
}

/// Each annotator's embedding scored against that annotator's own labels,
/// pooled over every (sentence, annotator) pair of the corpus.
pub fn self_evaluate(model: &TaggerModel, corpus: &CrowdCorpus) -> Result<EvalReport, TrainError> {
    let mut gold = SpanSet::new();
    let mut pred = SpanSet::new();
    for e in &corpus.entries {
        for a in &e.annotations {
            let input = AnnotatorInput::Annotator(model.annotator_index(&a.annotator_id)?);
            let key = format!("{}\t{}", e.sentence.id, a.annotator_id);
            pred.insert(key.clone(), model.predict_spans(&e.sentence.tokens, &input)?);
            gold.insert(key, a.spans.clone());
        }
    }
    Ok(evaluate(&gold, &pred)?)
}

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum HistoryEvent {
    Epoch {
        mode: TrainMode,
        stage: u8,
        epoch: usize,
        instances: usize,
        train_loss: f64,
        dev_exact_f1: f64,
        dev_proportional_f1: f64,
        dev_binary_f1: f64,
        best: bool,
    },
    StageBoundary {
        stage: u8,
        after_epoch: usize,
        best_epoch: usize,
        best_dev_exact_f1: f64,
    },
    Stop {
        stage: u8,
        epoch: usize,
        reason: String,
    },
}

pub fn history_jsonl(history: &[HistoryEvent]) -> String {
    history
        .iter()
        .map(|h| serde_json::to_string(h).expect("history serializes") + "\n")
        .collect()
}

pub struct TrainOutcome {
    /// Parameters of the best dev epoch.
    pub model: TaggerModel,
    pub history: Vec<HistoryEvent>,
    pub best_epoch: usize,
    pub best_dev: EvalReport,
}

const TRAIN_STREAM: u64 = 0x7472_6169_6e;

struct Best {
    epoch: usize,
    report: EvalReport,
    params: ParamStore,
}

/// Trains `model` on `train`, selecting the epoch with the best dev exact
/// F1. Dev is scored against gold when every dev sentence has it and
/// against the crowd majority vote otherwise.
pub fn train(train: &CrowdCorpus, dev: &CrowdCorpus, mut model: TaggerModel, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let mode = cfg.mode;
    model.annotator_conditioned = mode.uses_annotators();
    if dev.is_empty() {
        return Err(TrainError::Mode {
            mode,
            reason: "dev split is empty".into(),
        });
    }
    let base = build_examples(train, &model, mode)?;
    let token_ids = corpus_token_ids(&model, train);
    let dev_reference = if dev.has_gold() { Reference::Gold } else { Reference::Majority };
    let inference = mode.inference_input();
    let dropout = model.config.dropout_prob;
    let mut rng = stream(cfg.seed, &[TRAIN_STREAM]);

    let mut history = Vec::new();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best: Option<Best> = None;
    let mut adam = AdamState::new(&model.params);
    let mut epoch = 0;
    let stages: &[u8] = if mode == TrainMode::AdapterMixup { &[1, 2] } else { &[1] };

    for &stage in stages {
        let budget = if stage == 1 { cfg.max_epochs } else { cfg.stage2_epochs };
        let mixing = mode == TrainMode::AdapterMixup && (stage == 2 || cfg.mixup.in_stage1);
        if stage == 2 {
            let b = best.as_ref().expect("stage 1 ran at least one epoch");
            history.push(HistoryEvent::StageBoundary {
                stage,
                after_epoch: epoch,
                best_epoch: b.epoch,
                best_dev_exact_f1: b.report.exact.f1,
            });
            // continue from the stage-1 optimum with fresh optimizer moments
            model.params = b.params.clone();
            adam = AdamState::new(&model.params);
            stopper.rearm();
        }
        for _ in 0..budget {
            epoch += 1;
            let mut examples = base.clone();
            if mixing {
                examples.extend(pair_instances(train, &cfg.mixup, &mut rng)?.into_iter().map(Example::Mix));
            }
            examples.shuffle(&mut rng);
            let refs: Vec<&Example> = examples.iter().collect();
            let mut loss_sum = 0.0;
            for batch in refs.chunks(cfg.batch_size) {
                let l = train_step(&mut model, &token_ids, batch, &mut adam, cfg, dropout, &mut rng)?;
                if !l.is_finite() {
                    return Err(TrainError::Diverged { epoch });
                }
                loss_sum += l * batch.len() as f64;
            }
            let (report, _) = evaluate_model(&model, dev, &inference, &dev_reference)?.expect("dev reference exists");
            let (improved, stop) = stopper.observe(report.exact.f1);
            if improved {
                best = Some(Best {
                    epoch,
                    report,
                    params: model.params.clone(),
                });
            }
            log::info!(
                "{mode} stage {stage} epoch {epoch}: loss {:.4}, dev exact F1 {:.4}{}",
                loss_sum / examples.len() as f64,
                report.exact.f1,
                if improved { " (best)" } else { "" }
            );
            history.push(HistoryEvent::Epoch {
                mode,
                stage,
                epoch,
                instances: examples.len(),
                train_loss: loss_sum / examples.len() as f64,
                dev_exact_f1: report.exact.f1,
                dev_proportional_f1: report.proportional.f1,
                dev_binary_f1: report.binary.f1,
                best: improved,
            });
            if stop {
                history.push(HistoryEvent::Stop {
                    stage,
                    epoch,
                    reason: "patience".into(),
                });
                break;
            }
        }
    }
    let best = best.expect("at least one epoch");
    model.params = best.params;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: best.epoch,
        best_dev: best.report,
    })
}
