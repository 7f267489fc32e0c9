//! The annotator-adapter tagger.
//!
//! Tokens pass through a small transformer whose layers each carry two
//! bottleneck adapters (after attention and after the feed-forward block).
//! In the top `pgn_layers` layers the adapter weights are not stored but
//! generated by contracting generator tensors with an annotator embedding.
//! A BiLSTM, a two-layer MLP and a linear-chain CRF turn the
//! representations into tag scores.

pub mod adapter;
mod checkpoint;
pub mod crf;
mod lstm;
mod params;
mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use crf::CrfParams;
pub use params::{Binder, Param, ParamGroup, ParamId, ParamStore};
pub use vocab::{Vocab, UNK};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Annotation, AnnotatorRegistry, Span};
use crate::numeric::{Graph, Tensor, TensorError, Var};
use crate::tags::{self, Tag};
use adapter::{adapter_node, generate_node, AdapterVars, PgnVars};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("sentence of {len} tokens exceeds max_len {max}")]
    TooLong { len: usize, max: usize },
    #[error("empty sentence")]
    EmptySentence,
    #[error("unknown annotator {id}; known annotators: {known}")]
    UnknownAnnotator { id: String, known: String },
    #[error("annotator index {0} out of range")]
    AnnotatorIndex(usize),
    #[error("annotator embedding table is empty")]
    EmptyTable,
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub model_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub adapter_bottleneck: usize,
    pub annotator_dim: usize,
    /// Number of top layers whose adapters are generated; 0 disables
    /// annotator conditioning entirely.
    pub pgn_layers: usize,
    /// Hidden size of each LSTM direction.
    pub bilstm_hidden: usize,
    pub mlp_hidden: usize,
    pub tag_count: usize,
    pub dropout_prob: f64,
    pub max_len: usize,
    /// Rows of the annotator embedding table.
    pub annotators: usize,
}

/// Architecture hyperparameters that do not depend on the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub model_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub adapter_bottleneck: usize,
    pub annotator_dim: usize,
    pub pgn_layers: usize,
    pub bilstm_hidden: usize,
    pub mlp_hidden: usize,
    pub dropout_prob: f64,
    pub max_len: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let c = ModelConfig::desk(1, 1);
        Self {
            model_dim: c.model_dim,
            layers: c.layers,
            heads: c.heads,
            ff_dim: c.ff_dim,
            adapter_bottleneck: c.adapter_bottleneck,
            annotator_dim: c.annotator_dim,
            pgn_layers: c.pgn_layers,
            bilstm_hidden: c.bilstm_hidden,
            mlp_hidden: c.mlp_hidden,
            dropout_prob: c.dropout_prob,
            max_len: c.max_len,
        }
    }
}

impl ModelSettings {
    pub fn config(&self, vocab_size: usize, annotators: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            model_dim: self.model_dim,
            layers: self.layers,
            heads: self.heads,
            ff_dim: self.ff_dim,
            adapter_bottleneck: self.adapter_bottleneck,
            annotator_dim: self.annotator_dim,
            pgn_layers: self.pgn_layers,
            bilstm_hidden: self.bilstm_hidden,
            mlp_hidden: self.mlp_hidden,
            tag_count: Tag::COUNT,
            dropout_prob: self.dropout_prob,
            max_len: self.max_len,
            annotators,
        }
    }
}

impl ModelConfig {
    /// Desk-scale defaults: 64-dim, 2-layer backbone with both layers
    /// annotator-conditioned.
    pub fn desk(vocab_size: usize, annotators: usize) -> Self {
        Self {
            vocab_size,
            model_dim: 64,
            layers: 2,
            heads: 4,
            ff_dim: 128,
            adapter_bottleneck: 16,
            annotator_dim: 8,
            pgn_layers: 2,
            bilstm_hidden: 32,
            mlp_hidden: 32,
            tag_count: Tag::COUNT,
            dropout_prob: 0.2,
            max_len: 64,
            annotators,
        }
    }

    /// Dimensions of the BERT-base setting (768-dim, 12 layers, adapters of
    /// 128, annotator embeddings of 8 generating the top 6 layers).
    pub fn bert_base(vocab_size: usize, annotators: usize) -> Self {
        Self {
            vocab_size,
            model_dim: 768,
            layers: 12,
            heads: 12,
            ff_dim: 3072,
            adapter_bottleneck: 128,
            annotator_dim: 8,
            pgn_layers: 6,
            bilstm_hidden: 200,
            mlp_hidden: 400,
            tag_count: Tag::COUNT,
            dropout_prob: 0.2,
            max_len: 512,
            annotators,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("model_dim", self.model_dim),
            ("layers", self.layers),
            ("heads", self.heads),
            ("ff_dim", self.ff_dim),
            ("adapter_bottleneck", self.adapter_bottleneck),
            ("annotator_dim", self.annotator_dim),
            ("bilstm_hidden", self.bilstm_hidden),
            ("mlp_hidden", self.mlp_hidden),
            ("max_len", self.max_len),
            ("annotators", self.annotators),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if self.pgn_layers > self.layers {
            return Err(ModelError::Config("pgn_layers exceeds layers".into()));
        }
        if self.model_dim % self.heads != 0 {
            return Err(ModelError::Config("model_dim must be divisible by heads".into()));
        }
        if self.tag_count != Tag::COUNT {
            return Err(ModelError::Config(format!("tag_count must be {}", Tag::COUNT)));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(ModelError::Config("dropout_prob must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn is_generated(&self, layer: usize) -> bool {
        layer >= self.layers - self.pgn_layers
    }
}

/// Which annotator embedding conditions the generated adapters.
#[derive(Clone, Debug, PartialEq)]
pub enum AnnotatorInput {
    /// No conditioning: generated adapters are skipped, which equals
    /// generating them from the zero vector.
    Agnostic,
    Annotator(usize),
    /// Centroid of all annotator embeddings.
    Expert,
    /// `lambda * e[first] + (1 - lambda) * e[second]`, with the weights
    /// from [`mix_weights`].
    Mix { first: usize, second: usize, lambda: f64 },
    /// An explicit embedding vector.
    Vector(Vec<f64>),
}

#[derive(Clone, Copy, Debug)]
enum Init {
    TruncNormal,
    Xavier,
    /// LSTM recurrent weights: four orthogonal `h x h` gate blocks.
    Recurrent,
    Zeros,
    Ones,
}

#[derive(Clone, Copy, Debug)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Clone, Copy, Debug)]
enum AdapterSite {
    Shared { w_down: ParamId, b_down: ParamId, w_up: ParamId, b_up: ParamId },
    Generated { t_w_down: ParamId, t_b_down: ParamId, t_w_up: ParamId, t_b_up: ParamId },
}

#[derive(Clone, Debug)]
struct LayerIds {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    attn_norm: Norm,
    ff1: Linear,
    ff2: Linear,
    ff_norm: Norm,
    sites: [AdapterSite; 2],
}

#[derive(Clone, Copy, Debug)]
struct LstmIds {
    w_ih: ParamId,
    w_hh: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug)]
struct Layout {
    tokens: ParamId,
    positions: ParamId,
    embed_norm: Norm,
    layers: Vec<LayerIds>,
    lstm_fwd: LstmIds,
    lstm_bwd: LstmIds,
    mlp1: Linear,
    mlp2: Linear,
    transitions: ParamId,
    start: ParamId,
    end: ParamId,
    annotators: ParamId,
}

impl Layout {
    fn build(cfg: &ModelConfig, store: &mut ParamStore, make: &mut dyn FnMut(&[usize], Init) -> Tensor) -> Self {
        use ParamGroup::*;
        let (dm, bn, d) = (cfg.model_dim, cfg.adapter_bottleneck, cfg.annotator_dim);
        let mut add = |name: String, shape: &[usize], init: Init, group: ParamGroup| {
            let t = make(shape, init);
            store.add(name, t, group)
        };
        let tokens = add("embed.tokens".into(), &[cfg.vocab_size, dm], Init::TruncNormal, Backbone);
        let positions = add("embed.positions".into(), &[cfg.max_len, dm], Init::TruncNormal, Backbone);
        let embed_norm = Norm {
            gamma: add("embed.norm.gamma".into(), &[dm], Init::Ones, LayerNorm),
            beta: add("embed.norm.beta".into(), &[dm], Init::Zeros, LayerNorm),
        };
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let mut linear = |name: &str, fan_in: usize, fan_out: usize| Linear {
                w: add(format!("layer{l}.{name}.w"), &[fan_in, fan_out], Init::TruncNormal, Backbone),
                b: add(format!("layer{l}.{name}.b"), &[fan_out], Init::Zeros, Backbone),
            };
            let q = linear("attn.q", dm, dm);
            let k = linear("attn.k", dm, dm);
            let v = linear("attn.v", dm, dm);
            let o = linear("attn.o", dm, dm);
            let ff1 = linear("ffn.in", dm, cfg.ff_dim);
            let ff2 = linear("ffn.out", cfg.ff_dim, dm);
            let mut norm = |name: &str| Norm {
                gamma: add(format!("layer{l}.{name}.gamma"), &[dm], Init::Ones, LayerNorm),
                beta: add(format!("layer{l}.{name}.beta"), &[dm], Init::Zeros, LayerNorm),
            };
            let attn_norm = norm("attn_norm");
            let ff_norm = norm("ffn_norm");
            let mut site = |s: usize| {
                if cfg.is_generated(l) {
                    let p = format!("layer{l}.adapter{s}.pgn");
                    AdapterSite::Generated {
                        t_w_down: add(format!("{p}.w_down"), &[dm, bn, d], Init::TruncNormal, Generator),
                        t_b_down: add(format!("{p}.b_down"), &[bn, d], Init::TruncNormal, Generator),
                        t_w_up: add(format!("{p}.w_up"), &[bn, dm, d], Init::TruncNormal, Generator),
                        t_b_up: add(format!("{p}.b_up"), &[dm, d], Init::TruncNormal, Generator),
                    }
                } else {
                    let p = format!("layer{l}.adapter{s}");
                    AdapterSite::Shared {
                        w_down: add(format!("{p}.w_down"), &[dm, bn], Init::TruncNormal, Adapter),
                        b_down: add(format!("{p}.b_down"), &[bn], Init::Zeros, Adapter),
                        w_up: add(format!("{p}.w_up"), &[bn, dm], Init::TruncNormal, Adapter),
                        b_up: add(format!("{p}.b_up"), &[dm], Init::Zeros, Adapter),
                    }
                }
            };
            let sites = [site(0), site(1)];
            layers.push(LayerIds {
                q,
                k,
                v,
                o,
                attn_norm,
                ff1,
                ff2,
                ff_norm,
                sites,
            });
        }
        let h = cfg.bilstm_hidden;
        let mut lstm = |dir: &str| LstmIds {
            w_ih: add(format!("bilstm.{dir}.w_ih"), &[dm, 4 * h], Init::Xavier, Task),
            w_hh: add(format!("bilstm.{dir}.w_hh"), &[h, 4 * h], Init::Recurrent, Task),
            b: add(format!("bilstm.{dir}.b"), &[4 * h], Init::Zeros, Task),
        };
        let lstm_fwd = lstm("fwd");
        let lstm_bwd = lstm("bwd");
        let mlp1 = Linear {
            w: add("mlp.hidden.w".into(), &[2 * h, cfg.mlp_hidden], Init::Xavier, Task),
            b: add("mlp.hidden.b".into(), &[cfg.mlp_hidden], Init::Zeros, Task),
        };
        let mlp2 = Linear {
            w: add("mlp.out.w".into(), &[cfg.mlp_hidden, cfg.tag_count], Init::Xavier, Task),
            b: add("mlp.out.b".into(), &[cfg.tag_count], Init::Zeros, Task),
        };
        let t = cfg.tag_count;
        let transitions = add("crf.transitions".into(), &[t, t], Init::Zeros, Task);
        let start = add("crf.start".into(), &[t], Init::Zeros, Task);
        let end = add("crf.end".into(), &[t], Init::Zeros, Task);
        let annotators = add("annotators.embed".into(), &[cfg.annotators, d], Init::TruncNormal, Annotator);
        Self {
            tokens,
            positions,
            embed_norm,
            layers,
            lstm_fwd,
            lstm_bwd,
            mlp1,
            mlp2,
            transitions,
            start,
            end,
            annotators,
        }
    }
}

const NORM_EPS: f64 = 1e-12;


/// Dropout applied to whole token vectors.
#[derive(Clone, Debug)]
pub struct TokenMask(pub Tensor);

#[derive(Clone, Debug)]
pub struct TaggerModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub registry: AnnotatorRegistry,
    pub params: ParamStore,
    /// When false every annotator input is treated as [`AnnotatorInput::Agnostic`];
    /// set for models trained without annotator information.
    pub annotator_conditioned: bool,
    layout: Layout,
}

fn init_tensor(shape: &[usize], init: Init, rng: &mut impl Rng) -> Tensor {
    match init {
        Init::TruncNormal => params::truncated_normal(shape, 0.02, rng),
        Init::Xavier => params::xavier(shape[0], shape[1], rng),
        Init::Recurrent => {
            let h = shape[0];
            let blocks: Vec<Vec<f64>> = (0..4).map(|_| params::orthogonal(h, rng)).collect();
            let mut data = vec![0.0; h * 4 * h];
            for (b, block) in blocks.iter().enumerate() {
                for i in 0..h {
                    data[i * 4 * h + b * h..i * 4 * h + (b + 1) * h].copy_from_slice(&block[i * h..(i + 1) * h]);
                }
            }
            Tensor::new(shape.to_vec(), data).expect("shape")
        }
        Init::Zeros => Tensor::zeros(shape),
        Init::Ones => Tensor::filled(shape, 1.0),
    }
}

impl TaggerModel {
    pub fn new(config: ModelConfig, vocab: Vocab, registry: AnnotatorRegistry, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        if vocab.len() != config.vocab_size {
            return Err(ModelError::Config(format!(
                "vocabulary has {} entries, config says {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        if registry.len() != config.annotators {
            return Err(ModelError::Config(format!(
                "registry has {} annotators, config says {}",
                registry.len(),
                config.annotators
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::default();
        let layout = Layout::build(&config, &mut params, &mut |shape, init| init_tensor(shape, init, &mut rng));
        Ok(Self {
            config,
            vocab,
            registry,
            params,
            annotator_conditioned: true,
            layout,
        })
    }

    /// Model with every parameter zero, matching the layout of `config`.
    pub(crate) fn zeroed(config: ModelConfig, vocab: Vocab, registry: AnnotatorRegistry) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = ParamStore::default();
        let layout = Layout::build(&config, &mut params, &mut |shape, _| Tensor::zeros(shape));
        Ok(Self {
            config,
            vocab,
            registry,
            params,
            annotator_conditioned: true,
            layout,
        })
    }

    pub fn token_ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.vocab.id(t)).collect()
    }

    pub fn annotator_index(&self, id: &str) -> Result<usize, ModelError> {
        self.registry.index_of(id).ok_or_else(|| ModelError::UnknownAnnotator {
            id: id.to_string(),
            known: self.registry.ids().join(", "),
        })
    }

    pub fn annotator_table(&self) -> &Tensor {
        self.params.value(self.layout.annotators)
    }

    pub fn expert_embedding(&self) -> Result<Vec<f64>, ModelError> {
        expert_embedding(self.annotator_table())
    }

    pub fn crf_params(&self) -> CrfParams {
        CrfParams {
            transitions: self.params.value(self.layout.transitions).clone(),
            start: self.params.value(self.layout.start).clone(),
            end: self.params.value(self.layout.end).clone(),
        }
    }

    fn embedding_node(&self, g: &mut Graph, b: &mut Binder, input: &AnnotatorInput) -> Result<Option<Var>, ModelError> {
        if !self.annotator_conditioned {
            return Ok(None);
        }
        let rows = self.config.annotators;
        let check = |i: usize| if i < rows { Ok(i) } else { Err(ModelError::AnnotatorIndex(i)) };
        Ok(match input {
            AnnotatorInput::Agnostic => None,
            AnnotatorInput::Annotator(i) => {
                let t = b.var(g, self.layout.annotators);
                Some(g.row(t, check(*i)?)?)
            }
            AnnotatorInput::Expert => {
                let t = b.var(g, self.layout.annotators);
                Some(g.mean_rows(t)?)
            }
            AnnotatorInput::Mix { first, second, lambda } => {
                let t = b.var(g, self.layout.annotators);
                let e1 = g.row(t, check(*first)?)?;
                let e2 = g.row(t, check(*second)?)?;
                let (w1, w2) = mix_weights(*lambda);
                let e1 = g.scale(e1, w1);
                let e2 = g.scale(e2, w2);
                Some(g.add(e1, e2)?)
            }
            AnnotatorInput::Vector(v) => {
                if v.len() != self.config.annotator_dim {
                    return Err(TensorError::ShapeMismatch {
                        op: "annotator embedding",
                        left: vec![v.len()],
                        right: vec![self.config.annotator_dim],
                    }
                    .into());
                }
                Some(g.constant(Tensor::vector(v.clone())))
            }
        })
    }

    fn linear(&self, g: &mut Graph, b: &mut Binder, x: Var, lin: Linear) -> Result<Var, ModelError> {
        let w = b.var(g, lin.w);
        let bias = b.var(g, lin.b);
        let y = g.matmul(x, w)?;
        Ok(g.add(y, bias)?)
    }

    fn norm(&self, g: &mut Graph, b: &mut Binder, x: Var, n: Norm) -> Result<Var, ModelError> {
        let gamma = b.var(g, n.gamma);
        let beta = b.var(g, n.beta);
        Ok(g.layer_norm(x, gamma, beta, NORM_EPS)?)
    }

    fn adapter(&self, g: &mut Graph, b: &mut Binder, h: Var, site: AdapterSite, e: Option<Var>) -> Result<Var, ModelError> {
        match site {
            AdapterSite::Shared { w_down, b_down, w_up, b_up } => {
                let vars = AdapterVars {
                    w_down: b.var(g, w_down),
                    b_down: b.var(g, b_down),
                    w_up: b.var(g, w_up),
                    b_up: b.var(g, b_up),
                };
                Ok(adapter_node(g, h, &vars)?)
            }
            AdapterSite::Generated { t_w_down, t_b_down, t_w_up, t_b_up } => {
                // a zero embedding generates an all-zero adapter, which is
                // exactly the identity
                let Some(e) = e else { return Ok(h) };
                let t = PgnVars {
                    t_w_down: b.var(g, t_w_down),
                    t_b_down: b.var(g, t_b_down),
                    t_w_up: b.var(g, t_w_up),
                    t_b_up: b.var(g, t_b_up),
                };
                let vars = generate_node(g, &t, e)?;
                Ok(adapter_node(g, h, &vars)?)
            }
        }
    }

    fn attention(&self, g: &mut Graph, b: &mut Binder, x: Var, ids: &LayerIds) -> Result<Var, ModelError> {
        let q = self.linear(g, b, x, ids.q)?;
        let k = self.linear(g, b, x, ids.k)?;
        let v = self.linear(g, b, x, ids.v)?;
        let heads = self.config.heads;
        let hd = self.config.model_dim / heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut contexts = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = g.slice_cols(q, h * hd, (h + 1) * hd)?;
            let kh = g.slice_cols(k, h * hd, (h + 1) * hd)?;
            let vh = g.slice_cols(v, h * hd, (h + 1) * hd)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale);
            let probs = g.softmax_rows(scores)?;
            contexts.push(g.matmul(probs, vh)?);
        }
        let ctx = g.concat_cols(&contexts)?;
        self.linear(g, b, ctx, ids.o)
    }

    /// Contextual representations (`n x model_dim`) of token ids.
    pub fn encode_node(&self, g: &mut Graph, b: &mut Binder, ids: &[usize], input: &AnnotatorInput) -> Result<Var, ModelError> {
        let n = ids.len();
        if n == 0 {
            return Err(ModelError::EmptySentence);
        }
        if n > self.config.max_len {
            return Err(ModelError::TooLong {
                len: n,
                max: self.config.max_len,
            });
        }
        let e = self.embedding_node(g, b, input)?;
        let tok = b.var(g, self.layout.tokens);
        let pos = b.var(g, self.layout.positions);
        let tok = g.gather_rows(tok, ids)?;
        let positions: Vec<usize> = (0..n).collect();
        let pos = g.gather_rows(pos, &positions)?;
        let x = g.add(tok, pos)?;
        let mut x = self.norm(g, b, x, self.layout.embed_norm)?;
        for layer in &self.layout.layers {
            let attn = self.attention(g, b, x, layer)?;
            let attn = self.adapter(g, b, attn, layer.sites[0], e)?;
            let res = g.add(x, attn)?;
            let x1 = self.norm(g, b, res, layer.attn_norm)?;
            let ff = self.linear(g, b, x1, layer.ff1)?;
            let ff = g.gelu(ff);
            let ff = self.linear(g, b, ff, layer.ff2)?;
            let ff = self.adapter(g, b, ff, layer.sites[1], e)?;
            let res = g.add(x1, ff)?;
            x = self.norm(g, b, res, layer.ff_norm)?;
        }
        Ok(x)
    }

    /// BiLSTM, MLP and output layer on top of representations.
    pub fn emissions_node(&self, g: &mut Graph, b: &mut Binder, reps: Var) -> Result<Var, ModelError> {
        let mut run = |g: &mut Graph, ids: LstmIds, reverse| -> Result<Var, ModelError> {
            let w_ih = b.var(g, ids.w_ih);
            let w_hh = b.var(g, ids.w_hh);
            let bias = b.var(g, ids.b);
            Ok(lstm::lstm_node(g, reps, w_ih, w_hh, bias, reverse)?)
        };
        let fwd = run(g, self.layout.lstm_fwd, false)?;
        let bwd = run(g, self.layout.lstm_bwd, true)?;
        let h = g.concat_cols(&[fwd, bwd])?;
        let hidden = self.linear(g, b, h, self.layout.mlp1)?;
        let hidden = g.tanh(hidden);
        self.linear(g, b, hidden, self.layout.mlp2)
    }

    /// Tag scores for a sentence; `mask` (shape `n x 1`) scales whole token
    /// representations before the BiLSTM.
    pub fn forward(
        &self,
        g: &mut Graph,
        b: &mut Binder,
        ids: &[usize],
        input: &AnnotatorInput,
        mask: Option<&TokenMask>,
    ) -> Result<Var, ModelError> {
        let mut reps = self.encode_node(g, b, ids, input)?;
        if let Some(TokenMask(m)) = mask {
            let m = g.constant(m.clone());
            reps = g.mul(reps, m)?;
        }
        self.emissions_node(g, b, reps)
    }

    /// Weighted sum of CRF negative log-likelihoods of several label
    /// sequences, all scored against one forward pass.
    pub fn loss_node(
        &self,
        g: &mut Graph,
        b: &mut Binder,
        emissions: Var,
        targets: &[(&[usize], f64)],
    ) -> Result<Var, ModelError> {
        let trans = b.var(g, self.layout.transitions);
        let start = b.var(g, self.layout.start);
        let end = b.var(g, self.layout.end);
        let mut total: Option<Var> = None;
        for (labels, weight) in targets {
            let nll = crf::nll_node(g, emissions, trans, start, end, labels)?;
            let term = if *weight == 1.0 { nll } else { g.scale(nll, *weight) };
            total = Some(match total {
                None => term,
                Some(t) => g.add(t, term)?,
            });
        }
        total.ok_or_else(|| ModelError::Config("loss needs at least one target".into()))
    }

    /// Representations of a token sequence, without gradient tracking.
    pub fn encode(&self, tokens: &[String], input: &AnnotatorInput) -> Result<Tensor, ModelError> {
        let mut g = Graph::new();
        let mut b = Binder::frozen(&self.params);
        let ids = self.token_ids(tokens);
        let r = self.encode_node(&mut g, &mut b, &ids, input)?;
        Ok(g.value(r).clone())
    }

    pub fn emissions(&self, tokens: &[String], input: &AnnotatorInput) -> Result<Tensor, ModelError> {
        let mut g = Graph::new();
        let mut b = Binder::frozen(&self.params);
        let ids = self.token_ids(tokens);
        let e = self.forward(&mut g, &mut b, &ids, input, None)?;
        Ok(g.value(e).clone())
    }

    /// CRF loss of one labeled sentence without gradient tracking.
    pub fn nll(&self, tokens: &[String], input: &AnnotatorInput, labels: &[usize]) -> Result<f64, ModelError> {
        let e = self.emissions(tokens, input)?;
        Ok(crf::nll(&e, &self.crf_params(), labels)?)
    }

    /// Viterbi tags for a sentence.
    pub fn predict_tags(&self, tokens: &[String], input: &AnnotatorInput) -> Result<Vec<Tag>, ModelError> {
        let e = self.emissions(tokens, input)?;
        let path = crf::viterbi(&e, &self.crf_params())?;
        Ok(path.into_iter().map(|i| Tag::from_index(i).expect("tag index")).collect())
    }

    pub fn predict_spans(&self, tokens: &[String], input: &AnnotatorInput) -> Result<Vec<Span>, ModelError> {
        Ok(tags::decode(&self.predict_tags(tokens, input)?))
    }

    /// Predicted annotation, labeled with `annotator_id`.
    pub fn predict(&self, tokens: &[String], input: &AnnotatorInput, annotator_id: &str) -> Result<Annotation, ModelError> {
        Ok(Annotation::new(annotator_id, self.predict_spans(tokens, input)?))
    }
}

/// Interpolation weights `(lambda, 1 - lambda)`.
///
/// The smaller weight is always derived from the larger one, whose
/// complement is exact in floating point. Swapping the pair and passing
/// `1 - lambda` therefore yields the same two numbers bit for bit.
pub fn mix_weights(lambda: f64) -> (f64, f64) {
    if lambda >= 0.5 {
        (lambda, 1.0 - lambda)
    } else {
        let big = 1.0 - lambda;
        (1.0 - big, big)
    }
}

/// Arithmetic mean of the rows of an annotator embedding table.
pub fn expert_embedding(table: &Tensor) -> Result<Vec<f64>, ModelError> {
    if table.rank() != 2 {
        return Err(ModelError::EmptyTable);
    }
    let rows = table.rows();
    let mut mean = vec![0.0; table.cols()];
    for r in 0..rows {
        mean.iter_mut().zip(table.row(r)).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny(pgn_layers: usize, annotators: usize) -> TaggerModel {
        let vocab = Vocab::from_tokens(["a", "b", "c"].iter().map(|s| s.to_string()));
        let mut cfg = ModelConfig::desk(vocab.len(), annotators);
        cfg.model_dim = 8;
        cfg.heads = 2;
        cfg.ff_dim = 12;
        cfg.adapter_bottleneck = 3;
        cfg.annotator_dim = 4;
        cfg.bilstm_hidden = 4;
        cfg.mlp_hidden = 5;
        cfg.max_len = 6;
        cfg.pgn_layers = pgn_layers;
        let reg = AnnotatorRegistry::new((0..annotators).map(|i| format!("a{i}")).collect()).unwrap();
        TaggerModel::new(cfg, vocab, reg, 7).unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(String::from).collect()
    }

    #[test]
    fn representation_shape() {
        let m = tiny(1, 2);
        let r = m.encode(&toks("a b zzz c"), &AnnotatorInput::Annotator(0)).unwrap();
        assert_eq!(r.shape(), &[4, 8]);
    }

    #[test]
    fn too_long_is_an_error() {
        let m = tiny(1, 2);
        let err = m.encode(&toks("a a a a a a a"), &AnnotatorInput::Expert).unwrap_err();
        assert!(matches!(err, ModelError::TooLong { len: 7, max: 6 }));
    }

    #[test]
    fn equal_embeddings_equal_representations() {
        let mut m = tiny(2, 2);
        let table = m.layout.annotators;
        let row: Vec<f64> = m.params.value(table).row(0).to_vec();
        m.params.value_mut(table).data_mut()[4..8].copy_from_slice(&row);
        let s = toks("a b c");
        let r0 = m.encode(&s, &AnnotatorInput::Annotator(0)).unwrap();
        let r1 = m.encode(&s, &AnnotatorInput::Annotator(1)).unwrap();
        assert_eq!(r0, r1);
    }

    #[test]
    fn without_generated_layers_embedding_is_ignored() {
        let m = tiny(0, 3);
        let s = toks("c b a");
        let r0 = m.encode(&s, &AnnotatorInput::Annotator(0)).unwrap();
        let r2 = m.encode(&s, &AnnotatorInput::Annotator(2)).unwrap();
        assert_eq!(r0, r2);
    }

    #[test]
    fn zero_vector_matches_agnostic() {
        let m = tiny(2, 2);
        let s = toks("a b");
        let z = m.encode(&s, &AnnotatorInput::Vector(vec![0.0; 4])).unwrap();
        let a = m.encode(&s, &AnnotatorInput::Agnostic).unwrap();
        assert_eq!(z, a);
    }

    #[test]
    fn flat_scores_predict_nothing() {
        let mut m = tiny(1, 2);
        for p in m.params.iter_mut().filter(|p| p.name.starts_with("mlp.out.")) {
            p.value.data_mut().fill(0.0);
        }
        let s = toks("a b c a");
        assert!(m.predict_spans(&s, &AnnotatorInput::Expert).unwrap().is_empty());
        assert_eq!(
            m.predict(&s, &AnnotatorInput::Expert, "expert").unwrap(),
            m.predict(&s, &AnnotatorInput::Expert, "expert").unwrap()
        );
    }

    #[test]
    fn expert_centroid() {
        let t = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(expert_embedding(&t).unwrap(), vec![0.5, 0.5]);
        let one = Tensor::new(vec![1, 3], vec![0.1, 0.2, 0.3]).unwrap();
        assert_eq!(expert_embedding(&one).unwrap(), vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn single_annotator_expert_equals_annotator() {
        let m = tiny(2, 1);
        let s = toks("a c");
        assert_eq!(
            m.emissions(&s, &AnnotatorInput::Expert).unwrap(),
            m.emissions(&s, &AnnotatorInput::Annotator(0)).unwrap()
        );
    }

    #[test]
    fn mix_weights_are_swap_symmetric() {
        for &l in &[0.0, 0.1, 0.3, 0.5, 0.7, 0.999, 1.0, 1e-17] {
            let (a, b) = mix_weights(l);
            let (c, d) = mix_weights(1.0 - l);
            assert_eq!((a, b), (d, c), "lambda {l}");
            assert_eq!(a + b, 1.0);
        }
        assert_eq!(mix_weights(1.0), (1.0, 0.0));
        assert_eq!(mix_weights(0.0), (0.0, 1.0));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ModelConfig::desk(10, 2);
        cfg.pgn_layers = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::desk(10, 2);
        cfg.heads = 5;
        assert!(cfg.validate().is_err());
        assert!(ModelConfig::bert_base(100, 70).validate().is_ok());
    }
}
