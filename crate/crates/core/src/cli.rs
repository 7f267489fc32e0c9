//! The `crowdtag` command line: simulate, train, eval, aggregate, stats.
//!
//! Reports go to stdout or `--out`, logs to stderr. Every command that
//! writes files also writes a manifest next to them before doing any long
//! computation, and finalizes it once all outputs are written.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{
    corpus_stats, load_corpus, load_registry, majority_vote, pairwise_kappa, save_corpus, save_registry, split_path,
    AnnotatorRegistry, CorpusError, CrowdCorpus, Entry, KappaLabels, MAJORITY_ANNOTATOR, REGISTRY_FILE,
};
use crate::crowdsim::{generate_corpus, stream, SimConfig, SimError, Split};
use crate::model::{save_checkpoint, load_checkpoint, AnnotatorInput, ModelError, ModelSettings, TaggerModel, Vocab};
use crate::train::{evaluate_model, history_jsonl, self_evaluate, train, Reference, TrainConfig, TrainError, TrainMode};

/// Process exit status per error class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Usage = 2,
    Config = 3,
    Io = 4,
    Data = 5,
    Model = 6,
    Train = 7,
    UnknownAnnotator = 8,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Train(TrainError),
    #[error("unknown annotator {id}; valid ids: {valid}")]
    UnknownAnnotator { id: String, valid: String },
}

impl CliError {
    pub fn exit(&self) -> Exit {
        match self {
            CliError::Usage(_) => Exit::Usage,
            CliError::Config(_) => Exit::Config,
            CliError::Io { .. } => Exit::Io,
            CliError::Corpus(CorpusError::Io { .. }) => Exit::Io,
            CliError::Corpus(_) | CliError::Data(_) => Exit::Data,
            CliError::Model(ModelError::Io { .. }) => Exit::Io,
            CliError::Model(ModelError::UnknownAnnotator { .. }) | CliError::UnknownAnnotator { .. } => {
                Exit::UnknownAnnotator
            }
            CliError::Model(_) => Exit::Model,
            CliError::Train(TrainError::Config(_)) => Exit::Config,
            CliError::Train(TrainError::Mode { .. }) => Exit::Data,
            CliError::Train(_) => Exit::Train,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Model(e)
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => CliError::Model(m),
            other => CliError::Train(other),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::File { path, message } => CliError::Io {
                path,
                source: std::io::Error::other(message),
            },
            other => CliError::Config(other.to_string()),
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "crowdtag", version, about = "Crowd-annotated opinion tagging with annotator adapters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic crowd corpus.
    Simulate(SimulateArgs),
    /// Train a tagger on a corpus directory.
    Train(TrainArgs),
    /// Score a checkpoint on a corpus split.
    Eval(EvalArgs),
    /// Replace crowd annotations by their majority vote.
    Aggregate(AggregateArgs),
    /// Corpus statistics and inter-annotator agreement.
    Stats(StatsArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// TOML simulator config; defaults to the standard noisy benchmark.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Directory holding train.jsonl and dev.jsonl.
    pub corpus: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(TrainModeArg))]
    pub mode: Option<TrainModeArg>,
    /// TOML file with [train] and [model] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub corpus: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// `expert`, an annotator id, or `all` for every registered annotator.
    #[arg(long, default_value = "expert")]
    pub annotator: String,
    /// Score annotator-conditioned predictions against gold instead of the
    /// annotator's own labels.
    #[arg(long)]
    pub against_gold: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AggregateArgs {
    pub corpus: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    pub corpus: PathBuf,
    /// Restrict to one split; all present splits by default.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// Clap wrapper so modes parse case-insensitively.
#[derive(Clone, Copy, Debug, Serialize)]
#[serde(transparent)]
pub struct TrainModeArg(pub TrainMode);

impl std::str::FromStr for TrainModeArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.parse().map(TrainModeArg)
    }
}

/// Contents of a training config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelSettings,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(io(path))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record of one command invocation.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub options: Value,
    pub config: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    /// Output file names, relative to the manifest's directory.
    pub outputs: Vec<String>,
    pub status: String,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` when set.
    pub started_at: u64,
    pub finished_at: Option<u64>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn now() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse().ok()) {
        return t;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(io(path))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

struct ManifestWriter {
    path: PathBuf,
    manifest: RunManifest,
}

impl ManifestWriter {
    fn start(path: PathBuf, command: &str, options: Value, config: Value, seed: Option<u64>, inputs: &[PathBuf]) -> Result<Self, CliError> {
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<_, CliError>>()?;
        let w = Self {
            path,
            manifest: RunManifest {
                tool: "crowdtag".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                options,
                config,
                seed,
                inputs,
                outputs: Vec::new(),
                status: "running".into(),
                started_at: now(),
                finished_at: None,
            },
        };
        w.write()?;
        Ok(w)
    }

    fn write(&self) -> Result<(), CliError> {
        write_json(&self.path, &self.manifest)
    }

    fn finish(mut self, outputs: Vec<String>) -> Result<(), CliError> {
        self.manifest.outputs = outputs;
        self.manifest.status = "complete".into();
        self.manifest.finished_at = Some(now());
        self.write()
    }
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    fs::write(path, to_pretty(value)).map_err(io(path))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io(dir))
}

fn emit(out: Option<&Path>, value: &Value) -> Result<(), CliError> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            print!("{}", to_pretty(value));
            Ok(())
        }
    }
}

fn require_seed(seed: Option<u64>) -> Result<Option<u64>, CliError> {
    if seed.is_none() && std::env::var_os("CI").is_some() {
        return Err(CliError::Usage("--seed is required when CI is set".into()));
    }
    Ok(seed)
}

fn json_of<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

/// Loads `<dir>/<split>.jsonl`, using the directory's registry when present.
pub fn load_split(dir: &Path, split: &str) -> Result<CrowdCorpus, CliError> {
    let path = split_path(dir, split);
    if !path.exists() {
        return Err(CliError::Data(format!("split file {} not found", path.display())));
    }
    let registry = load_dir_registry(dir)?;
    Ok(load_corpus(&path, registry.as_ref())?)
}

fn load_dir_registry(dir: &Path) -> Result<Option<AnnotatorRegistry>, CliError> {
    let reg = dir.join(REGISTRY_FILE);
    Ok(if reg.exists() { Some(load_registry(&reg)?) } else { None })
}

fn present_inputs(dir: &Path, splits: &[&str]) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = splits.iter().map(|s| split_path(dir, s)).filter(|p| p.exists()).collect();
    let reg = dir.join(REGISTRY_FILE);
    if reg.exists() {
        v.push(reg);
    }
    v
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let seed = require_seed(args.seed)?;
    let mut cfg = match &args.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    create_dir(&args.out)?;
    let inputs: Vec<PathBuf> = args.config.iter().cloned().collect();
    let manifest = ManifestWriter::start(
        args.out.join(MANIFEST_FILE),
        "simulate",
        json_of(args),
        json_of(&cfg),
        Some(cfg.seed),
        &inputs,
    )?;
    let sim = generate_corpus(&cfg)?;
    let mut outputs = Vec::new();
    for split in Split::ALL {
        let path = split_path(&args.out, split.name());
        save_corpus(sim.split(split), &path)?;
        outputs.push(format!("{}.jsonl", split.name()));
    }
    save_registry(&cfg.registry(), &args.out.join(REGISTRY_FILE))?;
    outputs.push(REGISTRY_FILE.into());
    let cfg_path = args.out.join("simulation.toml");
    fs::write(&cfg_path, cfg.to_toml()).map_err(io(&cfg_path))?;
    outputs.push("simulation.toml".into());
    let summary: Value = Split::ALL
        .iter()
        .zip(&sim.summaries)
        .map(|(s, sum)| (s.name().to_string(), json_of(sum)))
        .collect::<serde_json::Map<_, _>>()
        .into();
    write_json(&args.out.join("summary.json"), &summary)?;
    outputs.push("summary.json".into());
    manifest.finish(outputs)?;
    log::info!("wrote simulated corpus to {}", args.out.display());
    Ok(())
}

const MODEL_STREAM: u64 = 0x6d6f_6465_6c;

/// Builds an untrained model for a training corpus.
pub fn init_model(train: &CrowdCorpus, settings: &ModelSettings, seed: u64) -> Result<TaggerModel, CliError> {
    let vocab = Vocab::from_corpus(train);
    let registry = train.registry.clone();
    if registry.is_empty() {
        return Err(CliError::Data("training corpus has no annotators".into()));
    }
    let cfg = settings.config(vocab.len(), registry.len());
    let init_seed: u64 = stream(seed, &[MODEL_STREAM]).random();
    Ok(TaggerModel::new(cfg, vocab, registry, init_seed)?)
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let seed = require_seed(args.seed)?;
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = args.mode {
        cfg.train.mode = m.0;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    cfg.train.validate()?;
    let train_set = load_split(&args.corpus, "train")?;
    let dev_set = load_split(&args.corpus, "dev")?;
    create_dir(&args.out)?;
    let mut inputs = present_inputs(&args.corpus, &["train", "dev"]);
    inputs.extend(args.config.iter().cloned());
    let manifest = ManifestWriter::start(
        args.out.join(MANIFEST_FILE),
        "train",
        json_of(args),
        json_of(&cfg),
        Some(cfg.train.seed),
        &inputs,
    )?;
    let model = init_model(&train_set, &cfg.model, cfg.train.seed)?;
    let outcome = train(&train_set, &dev_set, model, &cfg.train)?;
    let ckpt = args.out.join("checkpoint.json");
    save_checkpoint(&outcome.model, &ckpt)?;
    let hist = args.out.join("history.jsonl");
    fs::write(&hist, history_jsonl(&outcome.history)).map_err(io(&hist))?;
    let report = json!({
        "mode": cfg.train.mode,
        "best_epoch": outcome.best_epoch,
        "dev": outcome.best_dev,
    });
    write_json(&args.out.join("dev_report.json"), &report)?;
    manifest.finish(vec![
        "checkpoint.json".into(),
        "history.jsonl".into(),
        "dev_report.json".into(),
    ])?;
    log::info!(
        "best dev exact F1 {:.4} at epoch {}",
        outcome.best_dev.exact.f1,
        outcome.best_epoch
    );
    Ok(())
}

fn eval_entry(
    model: &TaggerModel,
    corpus: &CrowdCorpus,
    annotator: &str,
    input: &AnnotatorInput,
    reference: &Reference,
) -> Result<Value, CliError> {
    let Some((report, breakdown)) = evaluate_model(model, corpus, input, reference)? else {
        return Err(CliError::Data(match reference {
            Reference::Gold => "split has no gold annotations".into(),
            Reference::Crowd(id) => format!("annotator {id} labeled no sentence in this split"),
            Reference::Majority => "split has no sentences".into(),
        }));
    };
    let reference = match reference {
        Reference::Gold => "gold",
        Reference::Majority => "majority",
        Reference::Crowd(_) => "self",
    };
    Ok(json!({
        "annotator": annotator,
        "reference": reference,
        "report": report,
        "breakdown": breakdown,
    }))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let model = load_checkpoint(&args.checkpoint)?;
    let corpus = load_split(&args.corpus, &args.split)?;
    let manifest = match &args.out {
        Some(out) => {
            let mut inputs = vec![args.checkpoint.clone()];
            inputs.extend(present_inputs(&args.corpus, &[args.split.as_str()]));
            Some(ManifestWriter::start(
                manifest_beside(out),
                "eval",
                json_of(args),
                Value::Null,
                None,
                &inputs,
            )?)
        }
        None => None,
    };
    let per_annotator = |id: &str| -> Result<Value, CliError> {
        let idx = model.registry.index_of(id).ok_or_else(|| CliError::UnknownAnnotator {
            id: id.to_string(),
            valid: model.registry.ids().join(", "),
        })?;
        let reference = if args.against_gold {
            Reference::Gold
        } else {
            Reference::Crowd(id.to_string())
        };
        eval_entry(&model, &corpus, id, &AnnotatorInput::Annotator(idx), &reference)
    };
    let result = match args.annotator.as_str() {
        "expert" => {
            let input = if model.annotator_conditioned {
                AnnotatorInput::Expert
            } else {
                AnnotatorInput::Agnostic
            };
            let mut v = eval_entry(&model, &corpus, "expert", &input, &Reference::Gold)?;
            v["split"] = json!(args.split);
            v
        }
        "all" => {
            let mut entries = Vec::new();
            for id in model.registry.ids() {
                match per_annotator(id) {
                    Ok(v) => entries.push(v),
                    // annotators absent from this split have nothing to self-evaluate
                    Err(CliError::Data(_)) if !args.against_gold => continue,
                    Err(e) => return Err(e),
                }
            }
            let mut v = json!({ "split": args.split, "annotators": entries });
            if !args.against_gold {
                v["pooled_self"] = json_of(&self_evaluate(&model, &corpus)?);
            }
            v
        }
        id => {
            let mut v = per_annotator(id)?;
            v["split"] = json!(args.split);
            v
        }
    };
    emit(args.out.as_deref(), &result)?;
    if let (Some(m), Some(out)) = (manifest, &args.out) {
        m.finish(vec![file_name(out)])?;
    }
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// `<out>.manifest.json` next to a single-file output.
fn manifest_beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_else(|| OsString::from("report"));
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Majority-vote version of a corpus: one annotation per annotated
/// sentence, attributed to the `majority` pseudo-annotator.
pub fn aggregate(corpus: &CrowdCorpus) -> Result<CrowdCorpus, CliError> {
    let registry = AnnotatorRegistry::new(vec![MAJORITY_ANNOTATOR.to_string()])?;
    let entries = corpus
        .entries
        .iter()
        .map(|e| Entry {
            sentence: e.sentence.clone(),
            annotations: if e.annotations.is_empty() {
                Vec::new()
            } else {
                vec![majority_vote(&e.annotations, e.sentence.len())]
            },
            gold: e.gold.clone(),
        })
        .collect();
    Ok(CrowdCorpus::new(entries, registry)?)
}

const SPLITS: [&str; 3] = ["train", "dev", "test"];

pub fn cmd_aggregate(args: &AggregateArgs) -> Result<(), CliError> {
    let present: Vec<&str> = SPLITS.iter().copied().filter(|s| split_path(&args.corpus, s).exists()).collect();
    if present.is_empty() {
        return Err(CliError::Data(format!("no split files in {}", args.corpus.display())));
    }
    create_dir(&args.out)?;
    let manifest = ManifestWriter::start(
        args.out.join(MANIFEST_FILE),
        "aggregate",
        json_of(args),
        Value::Null,
        None,
        &present_inputs(&args.corpus, &present),
    )?;
    let mut outputs = Vec::new();
    for split in present {
        let corpus = load_split(&args.corpus, split)?;
        let mv = aggregate(&corpus)?;
        save_corpus(&mv, &split_path(&args.out, split))?;
        outputs.push(format!("{split}.jsonl"));
    }
    let registry = AnnotatorRegistry::new(vec![MAJORITY_ANNOTATOR.to_string()])?;
    save_registry(&registry, &args.out.join(REGISTRY_FILE))?;
    outputs.push(REGISTRY_FILE.into());
    manifest.finish(outputs)
}

fn kappa_value(corpus: &CrowdCorpus, ignore_all_o: bool, space: KappaLabels) -> Result<Value, CliError> {
    match pairwise_kappa(corpus, ignore_all_o, space) {
        Ok(k) => Ok(json!(k)),
        Err(CorpusError::InsufficientOverlap) => Ok(Value::Null),
        Err(e) => Err(e.into()),
    }
}

/// Statistics and both kappa variants of one split.
pub fn split_stats(corpus: &CrowdCorpus) -> Result<Value, CliError> {
    Ok(json!({
        "stats": corpus_stats(corpus),
        "kappa": {
            "overall": kappa_value(corpus, false, KappaLabels::Bio)?,
            "ignore_all_o": kappa_value(corpus, true, KappaLabels::Bio)?,
            "polarity_overall": kappa_value(corpus, false, KappaLabels::Polarity)?,
            "polarity_ignore_all_o": kappa_value(corpus, true, KappaLabels::Polarity)?,
        }
    }))
}

pub fn cmd_stats(args: &StatsArgs) -> Result<(), CliError> {
    let splits: Vec<&str> = match &args.split {
        Some(s) => vec![s.as_str()],
        None => SPLITS.iter().copied().filter(|s| split_path(&args.corpus, s).exists()).collect(),
    };
    if splits.is_empty() {
        return Err(CliError::Data(format!("no split files in {}", args.corpus.display())));
    }
    let manifest = match &args.out {
        Some(out) => Some(ManifestWriter::start(
            manifest_beside(out),
            "stats",
            json_of(args),
            Value::Null,
            None,
            &present_inputs(&args.corpus, &splits),
        )?),
        None => None,
    };
    let mut result = serde_json::Map::new();
    for split in splits {
        let corpus = load_split(&args.corpus, split)?;
        result.insert(split.to_string(), split_stats(&corpus)?);
    }
    emit(args.out.as_deref(), &Value::Object(result))?;
    if let (Some(m), Some(out)) = (manifest, &args.out) {
        m.finish(vec![file_name(out)])?;
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::Stats(a) => cmd_stats(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Exit::Usage as i32 } else { Exit::Ok as i32 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => Exit::Ok as i32,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit() as i32
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Annotation, Polarity, Sentence, Span};

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            Exit::Ok,
            Exit::Usage,
            Exit::Config,
            Exit::Io,
            Exit::Data,
            Exit::Model,
            Exit::Train,
            Exit::UnknownAnnotator,
        ];
        let mut v: Vec<i32> = codes.iter().map(|&c| c as i32).collect();
        v.sort();
        v.dedup();
        assert_eq!(v.len(), codes.len());
    }

    #[test]
    fn bad_flags_are_usage_errors() {
        assert_eq!(run(["crowdtag", "train"]), Exit::Usage as i32);
        assert_eq!(run(["crowdtag", "train", "x", "--out", "y", "--mode", "GOLD"]), Exit::Usage as i32);
        assert_eq!(run(["crowdtag", "frobnicate"]), Exit::Usage as i32);
    }

    #[test]
    fn run_config_defaults_and_unknown_keys() {
        let c: RunConfig = toml::from_str("[train]\nmode = \"MV\"\nbatch_size = 8\n").unwrap();
        assert_eq!(c.train.mode, TrainMode::Mv);
        assert_eq!(c.train.batch_size, 8);
        assert_eq!(c.train.learning_rate, 1e-3);
        assert_eq!(c.model, ModelSettings::default());
        assert!(toml::from_str::<RunConfig>("[model]\nwidth = 3\n").is_err());
    }

    #[test]
    fn aggregate_is_idempotent() {
        let reg = AnnotatorRegistry::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let s = Sentence {
            id: "s".into(),
            tokens: vec!["x".into(); 5],
        };
        let anns = vec![
            Annotation::new("a", vec![Span::new(0, 2, Polarity::Pos)]),
            Annotation::new("b", vec![Span::new(0, 2, Polarity::Pos), Span::new(3, 5, Polarity::Neg)]),
            Annotation::new("c", vec![Span::new(1, 2, Polarity::Pos)]),
        ];
        let c = CrowdCorpus::new(
            vec![Entry {
                sentence: s,
                annotations: anns,
                gold: None,
            }],
            reg,
        )
        .unwrap();
        let once = aggregate(&c).unwrap();
        assert_eq!(once.entries[0].annotations.len(), 1);
        assert_eq!(aggregate(&once).unwrap(), once);
    }

    #[test]
    fn manifest_path_sits_beside_report() {
        assert_eq!(
            manifest_beside(Path::new("/tmp/r/eval.json")),
            PathBuf::from("/tmp/r/eval.json.manifest.json")
        );
    }
}
