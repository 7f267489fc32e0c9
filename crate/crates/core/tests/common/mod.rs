//! Oracles shared by the property tests and the acceptance run.
#![allow(dead_code)]

use crowdtag::corpus::AnnotatorRegistry;
use crowdtag::mixup::{mixed_loss_node, MixupInstance};
use crowdtag::model::crf::CrfParams;
use crowdtag::model::{AnnotatorInput, Binder, ModelConfig, TaggerModel, TokenMask, Vocab};
use crowdtag::numeric::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---- finite differences over the whole model ----

#[derive(Clone)]
pub enum Case {
    Single(AnnotatorInput, Vec<usize>),
    Mix(MixupInstance),
}

/// A random tiny model with every parameter moved off its initializer.
pub fn tiny_model(rng: &mut ChaCha8Rng) -> TaggerModel {
    let vocab = Vocab::from_tokens((0..5).map(|i| format!("t{i}")));
    let annotators = rng.random_range(1..=3);
    let mut cfg = ModelConfig::desk(vocab.len(), annotators);
    cfg.model_dim = [4, 6, 8][rng.random_range(0..3)];
    cfg.heads = if cfg.model_dim == 6 { 3 } else { 2 };
    cfg.layers = rng.random_range(1..=2);
    cfg.pgn_layers = rng.random_range(0..=cfg.layers);
    cfg.ff_dim = rng.random_range(3..=7);
    cfg.adapter_bottleneck = rng.random_range(2..=3);
    cfg.annotator_dim = rng.random_range(2..=3);
    cfg.bilstm_hidden = rng.random_range(2..=3);
    cfg.mlp_hidden = rng.random_range(2..=4);
    cfg.max_len = 4;
    let ids = (0..annotators).map(|i| format!("a{i}")).collect();
    let mut m = TaggerModel::new(cfg, vocab, AnnotatorRegistry::new(ids).unwrap(), rng.random()).unwrap();
    // zero and tiny initializers would hide whole gradient paths
    for p in m.params.iter_mut() {
        for v in p.value.data_mut() {
            *v = rng.random_range(-0.8..0.8);
        }
    }
    m
}

fn case_loss(model: &TaggerModel, tokens: &[usize], case: &Case, mask: Option<&TokenMask>, grads: bool) -> (f64, Vec<Tensor>) {
    let mut g = Graph::new();
    let mut b = if grads {
        Binder::new(&model.params)
    } else {
        Binder::frozen(&model.params)
    };
    let l = match case {
        Case::Single(input, labels) => {
            let e = model.forward(&mut g, &mut b, tokens, input, mask).unwrap();
            model.loss_node(&mut g, &mut b, e, &[(labels, 1.0)]).unwrap()
        }
        Case::Mix(inst) => mixed_loss_node(model, &mut g, &mut b, tokens, inst, mask).unwrap(),
    };
    let value = g.value(l).item();
    let mut acc = model.params.zero_grads();
    if grads {
        let mut gr = g.backward(l).unwrap();
        b.collect(&mut gr, &mut acc, 1.0);
    }
    (value, acc)
}

fn random_case(model: &TaggerModel, n: usize, rng: &mut ChaCha8Rng) -> Case {
    let labels = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.random_range(0..5)).collect::<Vec<usize>>();
    let k = model.config.annotators;
    match rng.random_range(0..4) {
        0 => Case::Single(AnnotatorInput::Agnostic, labels(rng)),
        1 => Case::Single(AnnotatorInput::Annotator(rng.random_range(0..k)), labels(rng)),
        2 => Case::Single(AnnotatorInput::Expert, labels(rng)),
        _ if k >= 2 => Case::Mix(MixupInstance {
            sentence: 0,
            first: "a0".into(),
            second: format!("a{}", rng.random_range(1..k)),
            labels_first: labels(rng),
            labels_second: labels(rng),
            lambda: rng.random_range(0.05..0.95),
        }),
        _ => Case::Single(AnnotatorInput::Expert, labels(rng)),
    }
}

/// Relative error, floored so gradients that vanish up to rounding
/// compare absolutely.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

pub struct GradSweep {
    pub configs: usize,
    pub checked: usize,
    pub worst: f64,
    pub worst_at: String,
}

/// Central differences against backprop on `configs` random tiny models,
/// a few coordinates per parameter tensor.
pub fn gradient_sweep(configs: u64) -> GradSweep {
    const H: f64 = 1e-5;
    let mut out = GradSweep {
        configs: configs as usize,
        checked: 0,
        worst: 0.0,
        worst_at: String::new(),
    };
    for seed in 0..configs {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut model = tiny_model(&mut rng);
        let n = rng.random_range(1..=4);
        let tokens: Vec<usize> = (0..n).map(|_| rng.random_range(0..model.vocab.len())).collect();
        let case = random_case(&model, n, &mut rng);
        let mask = rng.random_bool(0.5).then(|| {
            let keep = (0..n).map(|_| if rng.random_bool(0.3) { 0.0 } else { 1.25 }).collect();
            TokenMask(Tensor::new(vec![n, 1], keep).unwrap())
        });
        let (_, analytic) = case_loss(&model, &tokens, &case, mask.as_ref(), true);
        for id in 0..model.params.len() {
            let len = model.params.value(id).len();
            let picks: Vec<usize> = (0..len.min(3)).map(|_| rng.random_range(0..len)).collect();
            for k in picks {
                let orig = model.params.value(id).data()[k];
                model.params.value_mut(id).data_mut()[k] = orig + H;
                let (up, _) = case_loss(&model, &tokens, &case, mask.as_ref(), false);
                model.params.value_mut(id).data_mut()[k] = orig - H;
                let (down, _) = case_loss(&model, &tokens, &case, mask.as_ref(), false);
                model.params.value_mut(id).data_mut()[k] = orig;
                let err = rel_err(analytic[id].data()[k], (up - down) / (2.0 * H));
                if err > out.worst {
                    out.worst = err;
                    out.worst_at = format!("config {seed}, {}[{k}]", model.params.get(id).name);
                }
                out.checked += 1;
            }
        }
    }
    out
}

// ---- CRF by enumeration ----

pub const TAGS: usize = 5;

pub fn random_crf(n: usize, rng: &mut ChaCha8Rng) -> (Tensor, CrfParams) {
    let mut draw = |len: usize| (0..len).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
    let emissions = Tensor::new(vec![n, TAGS], draw(n * TAGS)).unwrap();
    let crf = CrfParams {
        transitions: Tensor::new(vec![TAGS, TAGS], draw(TAGS * TAGS)).unwrap(),
        start: Tensor::vector(draw(TAGS)),
        end: Tensor::vector(draw(TAGS)),
    };
    (emissions, crf)
}

/// Every tag sequence of length `n`.
pub fn all_paths(n: usize) -> Vec<Vec<usize>> {
    (0..TAGS.pow(n as u32))
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let t = code % TAGS;
                    code /= TAGS;
                    t
                })
                .collect()
        })
        .collect()
}

/// Unnormalized path score written out directly, independent of the
/// library's scorer.
pub fn path_score(e: &Tensor, crf: &CrfParams, path: &[usize]) -> f64 {
    let (em, tr) = (e.data(), crf.transitions.data());
    let mut s = crf.start.data()[path[0]] + crf.end.data()[path[path.len() - 1]];
    for (i, &t) in path.iter().enumerate() {
        s += em[i * TAGS + t];
        if i > 0 {
            s += tr[path[i - 1] * TAGS + t];
        }
    }
    s
}

pub fn brute_force_best(e: &Tensor, crf: &CrfParams) -> Vec<usize> {
    all_paths(e.rows())
        .into_iter()
        .max_by(|a, b| path_score(e, crf, a).total_cmp(&path_score(e, crf, b)))
        .unwrap()
}

// ---- mixup fixtures ----

pub const MIX_ANNOTATORS: usize = 4;
const WORDS: [&str; 6] = ["good", "bad", "the", "film", "was", "unseen"];

/// Small conditioned model whose annotators produce clearly different
/// losses.
pub fn mix_model(seed: u64) -> TaggerModel {
    let vocab = Vocab::from_tokens(WORDS[..5].iter().map(|w| w.to_string()));
    let mut cfg = ModelConfig::desk(vocab.len(), MIX_ANNOTATORS);
    cfg.model_dim = 8;
    cfg.heads = 2;
    cfg.ff_dim = 12;
    cfg.adapter_bottleneck = 3;
    cfg.annotator_dim = 4;
    cfg.bilstm_hidden = 4;
    cfg.mlp_hidden = 6;
    cfg.max_len = 8;
    let ids = (0..MIX_ANNOTATORS).map(|i| format!("a{i}")).collect();
    let mut m = TaggerModel::new(cfg, vocab, AnnotatorRegistry::new(ids).unwrap(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in m.params.iter_mut() {
        for v in p.value.data_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    m
}

pub fn mix_instance(rng: &mut ChaCha8Rng, n: usize, lambda: f64) -> MixupInstance {
    let a = rng.random_range(0..MIX_ANNOTATORS);
    let b = (a + rng.random_range(1..MIX_ANNOTATORS)) % MIX_ANNOTATORS;
    let mut labels = || (0..n).map(|_| rng.random_range(0..5)).collect::<Vec<usize>>();
    MixupInstance {
        sentence: 0,
        first: format!("a{a}"),
        second: format!("a{b}"),
        labels_first: labels(),
        labels_second: labels(),
        lambda,
    }
}

pub fn mix_sentence(rng: &mut ChaCha8Rng) -> Vec<String> {
    (0..rng.random_range(1..=8)).map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string()).collect()
}

pub fn annotator_index(id: &str) -> usize {
    id[1..].parse().unwrap()
}

pub fn swapped(inst: &MixupInstance) -> MixupInstance {
    MixupInstance {
        first: inst.second.clone(),
        second: inst.first.clone(),
        labels_first: inst.labels_second.clone(),
        labels_second: inst.labels_first.clone(),
        lambda: 1.0 - inst.lambda,
        ..inst.clone()
    }
}

/// Loss of one interpolated forward pass evaluated as two separate
/// single-label passes on the same mixed embedding.
pub fn two_pass_loss(model: &TaggerModel, tokens: &[String], inst: &MixupInstance) -> f64 {
    let table = model.annotator_table();
    let d = table.cols();
    let (a, b, l) = (annotator_index(&inst.first), annotator_index(&inst.second), inst.lambda);
    let mixed: Vec<f64> = (0..d)
        .map(|k| l * table.data()[a * d + k] + (1.0 - l) * table.data()[b * d + k])
        .collect();
    let input = AnnotatorInput::Vector(mixed);
    l * model.nll(tokens, &input, &inst.labels_first).unwrap() + (1.0 - l) * model.nll(tokens, &input, &inst.labels_second).unwrap()
}
