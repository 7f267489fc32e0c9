use crowdtag::cli::init_model;
use crowdtag::corpus::{AnnotatorRegistry, CrowdCorpus};
use crowdtag::crowdsim::{generate_corpus, SimConfig, SimulatedCorpus};
use crowdtag::model::{AnnotatorInput, ModelSettings};
use crowdtag::train::{
    build_examples, corpus_token_ids, evaluate_model, train, train_step, AdamState, EarlyStopping, Example, HistoryEvent, Reference, TrainConfig,
    TrainMode,
};

fn small_settings() -> ModelSettings {
    ModelSettings {
        model_dim: 16,
        layers: 1,
        heads: 2,
        ff_dim: 32,
        pgn_layers: 1,
        bilstm_hidden: 16,
        mlp_hidden: 16,
        dropout_prob: 0.0,
        ..ModelSettings::default()
    }
}

fn corpus(cfg: SimConfig, train: usize, dev: usize) -> SimulatedCorpus {
    generate_corpus(&SimConfig {
        train_sentences: train,
        dev_sentences: dev,
        test_sentences: 10,
        ..cfg
    })
    .unwrap()
}

#[test]
fn fixed_batch_loss_descends() {
    let data = corpus(SimConfig::noiseless(3), 60, 10);
    let mut model = init_model(&data.train, &small_settings(), 3).unwrap();
    let examples = build_examples(&data.train, &model, TrainMode::All).unwrap();
    let batch: Vec<&Example> = examples.iter().take(16).collect();
    let ids = corpus_token_ids(&model, &data.train);
    let cfg = TrainConfig::default();
    let mut adam = AdamState::new(&model.params);
    let mut rng = crowdtag::crowdsim::stream(3, &[9]);
    let losses: Vec<f64> = (0..11)
        .map(|_| train_step(&mut model, &ids, &batch, &mut adam, &cfg, 0.0, &mut rng).unwrap())
        .collect();
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "loss went up: {losses:?}");
    }
}

#[test]
fn patience_one_stops_after_a_flat_epoch() {
    let mut s = EarlyStopping::new(1);
    assert_eq!(s.observe(0.4), (true, false));
    assert_eq!(s.observe(0.4), (false, true));
}

#[test]
fn returns_the_best_dev_checkpoint() {
    let data = corpus(SimConfig::noiseless(4), 120, 30);
    let model = init_model(&data.train, &small_settings(), 4).unwrap();
    let cfg = TrainConfig {
        mode: TrainMode::Adapter,
        batch_size: 8,
        max_epochs: 4,
        seed: 4,
        ..TrainConfig::default()
    };
    let out = train(&data.train, &data.dev, model, &cfg).unwrap();
    let scores: Vec<f64> = out
        .history
        .iter()
        .filter_map(|h| match h {
            HistoryEvent::Epoch { dev_exact_f1, .. } => Some(*dev_exact_f1),
            _ => None,
        })
        .collect();
    let max = scores.iter().copied().fold(f64::MIN, f64::max);
    assert_eq!(out.best_dev.exact.f1, max);
    let (again, _) = evaluate_model(&out.model, &data.dev, &AnnotatorInput::Expert, &Reference::Gold).unwrap().unwrap();
    assert_eq!(again, out.best_dev);
}

#[test]
fn same_seed_same_parameters() {
    let data = corpus(SimConfig::noiseless(5), 60, 10);
    let cfg = TrainConfig {
        mode: TrainMode::AdapterMixup,
        max_epochs: 2,
        stage2_epochs: 1,
        seed: 5,
        ..TrainConfig::default()
    };
    let run = || {
        let model = init_model(&data.train, &small_settings(), 5).unwrap();
        train(&data.train, &data.dev, model, &cfg).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.model.to_json(), b.model.to_json());
    assert_eq!(a.history, b.history);
}

/// Renames every annotator through a fixed shuffle of the registry.
fn relabel(c: &CrowdCorpus) -> CrowdCorpus {
    let ids = c.registry.ids();
    let rename = |id: &str| {
        let i = c.registry.index_of(id).unwrap();
        ids[(i * 7 + 3) % ids.len()].clone()
    };
    let mut out = c.clone();
    for e in &mut out.entries {
        for a in &mut e.annotations {
            a.annotator_id = rename(&a.annotator_id);
        }
    }
    out.registry = AnnotatorRegistry::new(ids.iter().map(|id| rename(id)).collect()).unwrap();
    out.canonicalize();
    out.validate().unwrap();
    out
}

#[test]
fn all_mode_ignores_annotator_identity() {
    let sim = SimConfig {
        profiles: crowdtag::crowdsim::population(10, crowdtag::crowdsim::NoiseRates::STANDARD, 0.5, 2),
        ..SimConfig::default()
    };
    let data = corpus(sim, 50, 10);
    assert_eq!(data.train.registry.len(), 10);
    let renamed = relabel(&data.train);
    assert_ne!(renamed.entries, data.train.entries);
    let cfg = TrainConfig {
        mode: TrainMode::All,
        max_epochs: 2,
        batch_size: 16,
        seed: 6,
        ..TrainConfig::default()
    };
    let run = |c: &CrowdCorpus| {
        let mut settings = small_settings();
        settings.dropout_prob = 0.1;
        let model = init_model(c, &settings, 6).unwrap();
        train(c, &data.dev, model, &cfg).unwrap()
    };
    let (a, b) = (run(&data.train), run(&renamed));
    assert_eq!(a.model.params, b.model.params);
    assert_eq!(a.history, b.history);
}
