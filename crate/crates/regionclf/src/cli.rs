//! The `regionclf` subcommands.
//!
//! Each command resolves its config (see [`crate::manifest`]), runs, and
//! writes a manifest next to its main output. `rerun` replays a manifest
//! and checks that the outputs come out byte-identical.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use regionclf_core::attacks::{
    CwConfig, CwL0, CwLinf, DeepFool, Fgsm, Igsm, Jsma, NoiseMetric, TargetedAttack,
};
use regionclf_core::dataset::{split, synth_blobs, SplitSpec};
use regionclf_core::evaluation::{
    benign_stream, combine_records, cw_l2_at, targeted_record, untargeted_from_records,
    untargeted_record, Benign, Judge, OutcomeRecord, PointJudge, RegionJudge,
};
use regionclf_core::region::label_histogram;
use regionclf_core::rng::derive_seed;
use regionclf_core::training::{accuracy, train, TrainConfig, TrainMode};
use regionclf_core::{Dataset, LayerSpec, Network, RegionClassifier};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::checkpoint::{self, Metadata};
use crate::error::{Error, Result};
use crate::manifest::{self, Manifest};
use crate::records::{self, AccuracyRow, MeasuredPoint, ReportRow};
use crate::{cache, fsutil, idx, parallel};

#[derive(Debug, Parser)]
#[command(
    name = "regionclf",
    version,
    about = "Region-based classification against evasion attacks"
)]
pub struct Cli {
    /// Worker threads (0: one per CPU). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// TOML or JSON config file (a manifest works too); flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest (default: next to the main output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the source data and write train/validation/test caches.
    Prepare(PrepareFlags),
    /// Train a point-based network.
    Train(TrainFlags),
    /// Run an attack campaign and write an outcomes CSV.
    Attack(AttackFlags),
    /// Learn (or take) the radius and evaluate the region classifier.
    Defend(DefendFlags),
    /// Write hypercube label histograms around benign or adversarial points.
    Measure(MeasureFlags),
    /// Confidence or alpha sweep; one report row per grid point.
    Sweep(SweepFlags),
    /// Merge report CSVs and print them as a table.
    Report(ReportFlags),
    /// Replay a manifest and check its output digests.
    Rerun(RerunFlags),
}

// Flags. Field names match the config keys; unset flags leave the config
// file or default in place.

#[derive(Debug, Args, Serialize)]
pub struct PrepareFlags {
    /// `mnist` or `blobs` (synthetic Gaussian blobs).
    #[arg(long)]
    source: Option<String>,
    /// Directory holding the four MNIST IDX files (plain or .gz).
    #[arg(long)]
    mnist_dir: Option<String>,
    /// Base URL to fetch missing `<name>.gz` MNIST files from.
    #[arg(long)]
    url: Option<String>,
    /// Output directory for train.rcd, validation.rcd and test.rcd.
    #[arg(long)]
    out: Option<String>,
    /// Seed of the validation draw (and of blob generation).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_count: Option<usize>,
    #[arg(long)]
    validation_count: Option<usize>,
    #[arg(long)]
    test_count: Option<usize>,
    #[arg(long)]
    blob_classes: Option<usize>,
    #[arg(long)]
    blob_dim: Option<usize>,
    #[arg(long)]
    blob_separation: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainFlags {
    /// Directory written by `prepare`.
    #[arg(long)]
    data: Option<String>,
    /// Checkpoint path; the log goes to `<out>.log.json`.
    #[arg(long)]
    out: Option<String>,
    /// `standard`, `adversarial` or `distilled`.
    #[arg(long)]
    mode: Option<String>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Vec<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Distillation temperature (distilled mode; default 100).
    #[arg(long)]
    temperature: Option<f64>,
    /// DeepFool iterations for adversarial training (default 50).
    #[arg(long)]
    deepfool_max_iters: Option<usize>,
    /// DeepFool overshoot for adversarial training (default 0.02).
    #[arg(long)]
    overshoot: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct AttackFlags {
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Attack name; see `attack --help` for the list.
    #[arg(long, long_help = ATTACK_HELP)]
    attack: Option<String>,
    /// Number of benign test examples (the first ones the model gets right).
    #[arg(long)]
    examples: Option<usize>,
    /// Targets per example, taken in class order (default: all others).
    #[arg(long)]
    targets: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Outcomes CSV (default `runs/<attack>.csv`).
    #[arg(long)]
    out: Option<String>,
    /// Keep finished examples of an interrupted run.
    #[arg(long)]
    resume: bool,
    /// Noise metric of `combined`: l0, l2 or linf.
    #[arg(long)]
    metric: Option<String>,
    /// CW confidence k.
    #[arg(long)]
    confidence: Option<f64>,
    #[arg(long)]
    cw_iterations: Option<usize>,
    #[arg(long)]
    cw_binary_search_steps: Option<usize>,
    #[arg(long)]
    cw_learning_rate: Option<f64>,
    /// Confidences combined by t-ca-l2 / u-ca-l2, comma separated.
    #[arg(long, value_delimiter = ',')]
    ca_l2_confidences: Vec<f64>,
    #[arg(long)]
    jsma_max_l0: Option<usize>,
    #[arg(long)]
    igsm_max_iters: Option<usize>,
    #[arg(long)]
    deepfool_max_iters: Option<usize>,
    #[arg(long)]
    overshoot: Option<f64>,
}

const KNOWN_ATTACKS: &str = "t-fgsm, t-igsm, t-jsma, t-cw-l0, t-cw-l2, t-cw-l2-k<K>, t-cw-linf, \
deepfool, t-ca-l0, t-ca-l2, t-ca-linf, u-ca-l0, u-ca-l2, u-ca-linf";

const ATTACK_HELP: &str = "Attack name. Targeted: t-fgsm, t-igsm, t-jsma, t-cw-l0, t-cw-l2, \
t-cw-linf, t-cw-l2-k<K>. Untargeted: deepfool and u-<name> for every targeted name (smallest \
success over targets). Combined: t-ca-l0, t-ca-l2, t-ca-linf, u-ca-l0, u-ca-l2, u-ca-linf, or \
`combined` with --metric.";

#[derive(Debug, Args, Serialize)]
pub struct DefendFlags {
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Outcomes CSVs to judge, comma separated.
    #[arg(long, value_delimiter = ',')]
    outcomes: Vec<String>,
    /// Use this radius instead of learning one.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    /// Samples per region classification.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Validation examples used to learn the radius (default: all).
    #[arg(long)]
    validation_examples: Option<usize>,
    /// Test examples for the accuracy table (default: all).
    #[arg(long)]
    test_examples: Option<usize>,
    /// More checkpoints to list in the accuracy table, comma separated.
    #[arg(long, value_delimiter = ',')]
    extra_models: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct MeasureFlags {
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Measure around the successful adversarial examples of this CSV.
    #[arg(long)]
    outcomes: Option<String>,
    /// Measure around these test examples, comma separated.
    #[arg(long, value_delimiter = ',')]
    ids: Vec<usize>,
    #[arg(long)]
    r: Option<f64>,
    /// `radius.json` written by `defend`.
    #[arg(long)]
    radius_file: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepFlags {
    /// `confidence` or `alpha`.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Base outcomes for the alpha sweep.
    #[arg(long)]
    outcomes: Option<String>,
    /// Grid values, comma separated.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    /// `region` or `point`.
    #[arg(long)]
    classifier: Option<String>,
    #[arg(long)]
    examples: Option<usize>,
    #[arg(long)]
    targets: Option<usize>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    radius_file: Option<String>,
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    validation_examples: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cw_iterations: Option<usize>,
    #[arg(long)]
    cw_binary_search_steps: Option<usize>,
    #[arg(long)]
    cw_learning_rate: Option<f64>,
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportFlags {
    /// Report CSVs, comma separated.
    #[arg(long, value_delimiter = ',')]
    inputs: Vec<String>,
    /// Merged CSV.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
pub struct RerunFlags {
    /// Manifest written by an earlier run.
    pub manifest_path: PathBuf,
}

// Effective configs.

fn default_data() -> String {
    "runs/data".into()
}

fn default_model() -> String {
    "runs/model.ckpt".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareConfig {
    pub source: String,
    pub mnist_dir: String,
    pub url: Option<String>,
    pub out: String,
    pub seed: u64,
    pub train_count: usize,
    pub validation_count: usize,
    pub test_count: usize,
    pub blob_classes: usize,
    pub blob_dim: usize,
    pub blob_separation: f64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        let s = SplitSpec::mnist(0);
        PrepareConfig {
            source: "mnist".into(),
            mnist_dir: "data/mnist".into(),
            url: None,
            out: default_data(),
            seed: 0,
            train_count: s.train_count,
            validation_count: s.validation_count,
            test_count: s.test_count,
            blob_classes: 3,
            blob_dim: 16,
            blob_separation: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCmdConfig {
    pub data: String,
    pub out: String,
    pub mode: String,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub temperature: Option<f64>,
    pub deepfool_max_iters: Option<usize>,
    pub overshoot: Option<f64>,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainCmdConfig {
            data: default_data(),
            out: default_model(),
            mode: "standard".into(),
            hidden: vec![128, 128],
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            seed: t.seed,
            temperature: None,
            deepfool_max_iters: None,
            overshoot: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub data: String,
    pub model: String,
    pub attack: String,
    pub examples: usize,
    pub targets: Option<usize>,
    pub seed: u64,
    pub out: Option<String>,
    pub resume: bool,
    pub metric: Option<String>,
    pub confidence: f64,
    pub cw_iterations: usize,
    pub cw_binary_search_steps: usize,
    pub cw_learning_rate: f64,
    pub cw_abort_early: bool,
    pub ca_l2_confidences: Vec<f64>,
    pub jsma_max_l0: usize,
    pub igsm_max_iters: usize,
    pub deepfool_max_iters: usize,
    pub overshoot: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        let cw = CwConfig::default();
        let df = DeepFool::default();
        AttackConfig {
            data: default_data(),
            model: default_model(),
            attack: "t-cw-l2".into(),
            examples: 100,
            targets: None,
            seed: 0,
            out: None,
            resume: false,
            metric: None,
            confidence: 0.0,
            cw_iterations: cw.inner_iterations,
            cw_binary_search_steps: cw.binary_search_steps,
            cw_learning_rate: cw.inner_learning_rate,
            cw_abort_early: cw.abort_early,
            ca_l2_confidences: vec![0.0, 10.0, 20.0, 30.0, 40.0],
            jsma_max_l0: Jsma::default().max_l0,
            igsm_max_iters: Igsm::default().max_iters,
            deepfool_max_iters: df.max_iters,
            overshoot: df.overshoot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefendConfig {
    pub data: String,
    pub model: String,
    pub outcomes: Vec<String>,
    pub r: Option<f64>,
    pub r0: f64,
    pub step: f64,
    pub m: usize,
    pub seed: u64,
    pub validation_examples: Option<usize>,
    pub test_examples: Option<usize>,
    pub extra_models: Vec<String>,
    pub out: String,
}

impl Default for DefendConfig {
    fn default() -> Self {
        DefendConfig {
            data: default_data(),
            model: default_model(),
            outcomes: Vec::new(),
            r: None,
            r0: 0.0,
            step: 0.01,
            m: regionclf_core::region::DEFAULT_SAMPLES,
            seed: 0,
            validation_examples: None,
            test_examples: None,
            extra_models: Vec::new(),
            out: "runs/defend".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    pub data: String,
    pub model: String,
    pub outcomes: Option<String>,
    pub ids: Vec<usize>,
    pub r: Option<f64>,
    pub radius_file: Option<String>,
    pub m: usize,
    pub seed: u64,
    pub out: String,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            data: default_data(),
            model: default_model(),
            outcomes: None,
            ids: Vec::new(),
            r: None,
            radius_file: None,
            m: regionclf_core::region::HISTOGRAM_SAMPLES,
            seed: 0,
            out: "runs/histograms.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub kind: String,
    pub data: String,
    pub model: String,
    pub outcomes: Option<String>,
    pub grid: Vec<f64>,
    pub classifier: String,
    pub examples: usize,
    pub targets: Option<usize>,
    pub r: Option<f64>,
    pub radius_file: Option<String>,
    pub r0: f64,
    pub step: f64,
    pub validation_examples: Option<usize>,
    pub m: usize,
    pub seed: u64,
    pub cw_iterations: usize,
    pub cw_binary_search_steps: usize,
    pub cw_learning_rate: f64,
    pub resume: bool,
    pub out: String,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let cw = CwConfig::default();
        SweepConfig {
            kind: "alpha".into(),
            data: default_data(),
            model: default_model(),
            outcomes: None,
            grid: Vec::new(),
            classifier: "region".into(),
            examples: 20,
            targets: None,
            r: None,
            radius_file: None,
            r0: 0.0,
            step: 0.01,
            validation_examples: None,
            m: regionclf_core::region::DEFAULT_SAMPLES,
            seed: 0,
            cw_iterations: cw.inner_iterations,
            cw_binary_search_steps: cw.binary_search_steps,
            cw_learning_rate: cw.inner_learning_rate,
            resume: false,
            out: "runs/sweep.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct ReportConfig {
    pub inputs: Vec<String>,
    pub out: Option<String>,
}

/// Files a run read and wrote, plus a short machine-readable summary.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Output next to which the manifest goes by default.
    pub primary: PathBuf,
    pub summary: Value,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    let file = cli.config.as_deref();
    let (name, config) = match &cli.command {
        Command::Prepare(f) => (
            "prepare",
            flags_config::<PrepareConfig, _>("prepare", file, f)?,
        ),
        Command::Train(f) => (
            "train",
            flags_config::<TrainCmdConfig, _>("train", file, f)?,
        ),
        Command::Attack(f) => (
            "attack",
            flags_config::<AttackConfig, _>("attack", file, f)?,
        ),
        Command::Defend(f) => (
            "defend",
            flags_config::<DefendConfig, _>("defend", file, f)?,
        ),
        Command::Measure(f) => (
            "measure",
            flags_config::<MeasureConfig, _>("measure", file, f)?,
        ),
        Command::Sweep(f) => ("sweep", flags_config::<SweepConfig, _>("sweep", file, f)?),
        Command::Report(f) => (
            "report",
            flags_config::<ReportConfig, _>("report", file, f)?,
        ),
        Command::Rerun(f) => return rerun(&f.manifest_path, threads),
    };
    let (effective, out) = parallel::with_threads(threads, || execute(name, config))??;
    let manifest = Manifest::new(
        name,
        &effective,
        &out.inputs,
        &out.outputs,
        out.summary.clone(),
    )?;
    let path = cli
        .manifest
        .clone()
        .unwrap_or_else(|| manifest::default_path(&out.primary));
    manifest.save(&path)?;
    eprintln!("manifest: {}", path.display());
    Ok(())
}

fn flags_config<C, F>(command: &str, file: Option<&Path>, flags: &F) -> Result<Value>
where
    C: Serialize + DeserializeOwned + Default,
    F: Serialize,
{
    let cfg: C = manifest::resolve(command, file, manifest::flag_values(flags)?)?;
    Ok(serde_json::to_value(cfg)?)
}

fn typed<C, F>(config: Value, f: F) -> Result<(Value, RunOutput)>
where
    C: Serialize + DeserializeOwned,
    F: FnOnce(&mut C) -> Result<RunOutput>,
{
    let mut cfg: C = serde_json::from_value(config).map_err(|e| Error::usage(e.to_string()))?;
    let out = f(&mut cfg)?;
    Ok((serde_json::to_value(&cfg)?, out))
}

/// Runs `command` with a fully resolved config. The returned config may
/// have defaults filled in (it is what the manifest records).
pub fn execute(command: &str, config: Value) -> Result<(Value, RunOutput)> {
    match command {
        "prepare" => typed(config, |c: &mut PrepareConfig| prepare(c)),
        "train" => typed(config, |c: &mut TrainCmdConfig| train_cmd(c)),
        "attack" => typed(config, |c: &mut AttackConfig| attack(c)),
        "defend" => typed(config, |c: &mut DefendConfig| defend(c)),
        "measure" => typed(config, |c: &mut MeasureConfig| measure(c)),
        "sweep" => typed(config, |c: &mut SweepConfig| sweep(c)),
        "report" => typed(config, |c: &mut ReportConfig| report(c)),
        other => Err(Error::usage(format!("unknown command {other:?}"))),
    }
}

fn rerun(path: &Path, threads: usize) -> Result<()> {
    let recorded = Manifest::load(path)?;
    let changed = manifest::changed_inputs(&recorded);
    if !changed.is_empty() {
        return Err(Error::Runtime(format!(
            "inputs changed since {} was written: {}",
            path.display(),
            changed.join(", ")
        )));
    }
    let (effective, out) = parallel::with_threads(threads, || {
        execute(&recorded.command, recorded.config.clone())
    })??;
    let fresh = Manifest::new(
        &recorded.command,
        &effective,
        &out.inputs,
        &out.outputs,
        out.summary,
    )?;
    let mut differing: Vec<String> = fresh
        .outputs
        .iter()
        .filter(|(p, d)| recorded.outputs.get(*p) != Some(*d))
        .map(|(p, _)| p.clone())
        .collect();
    differing.extend(
        recorded
            .outputs
            .keys()
            .filter(|p| !fresh.outputs.contains_key(*p))
            .cloned(),
    );
    if !differing.is_empty() {
        return Err(Error::Runtime(format!(
            "outputs differ from {}: {}",
            path.display(),
            differing.join(", ")
        )));
    }
    println!("{} outputs match {}", fresh.outputs.len(), path.display());
    Ok(())
}

// prepare

fn prepare(cfg: &mut PrepareConfig) -> Result<RunOutput> {
    let spec = SplitSpec {
        train_count: cfg.train_count,
        validation_count: cfg.validation_count,
        test_count: cfg.test_count,
        seed: cfg.seed,
    };
    let mut inputs = Vec::new();
    let (pool, test) = match cfg.source.as_str() {
        "mnist" => {
            let dir = PathBuf::from(&cfg.mnist_dir);
            if let Some(url) = &cfg.url {
                download_mnist(url, &dir)?;
            }
            for stem in idx::MNIST_FILES {
                inputs.push(idx::find_mnist_file(&dir, stem)?);
            }
            idx::load_mnist(&dir)?
        }
        "blobs" => {
            if cfg.url.is_some() {
                return Err(Error::usage("--url only applies to --source mnist"));
            }
            blobs(cfg)?
        }
        other => {
            return Err(Error::usage(format!(
                "unknown source {other:?} (expected mnist or blobs)"
            )))
        }
    };
    let s = split(&pool, &test, &spec)?;
    let dir = PathBuf::from(&cfg.out);
    let outputs = vec![
        dir.join("train.rcd"),
        dir.join("validation.rcd"),
        dir.join("test.rcd"),
    ];
    for (path, data) in outputs.iter().zip([&s.train, &s.validation, &s.test]) {
        cache::save(path, data)?;
    }
    eprintln!(
        "prepared {} train, {} validation, {} test examples in {}",
        s.train.len(),
        s.validation.len(),
        s.test.len(),
        dir.display()
    );
    Ok(RunOutput {
        inputs,
        outputs,
        primary: dir,
        summary: json!({
            "train": s.train.len(),
            "validation": s.validation.len(),
            "test": s.test.len(),
            "feature_dim": s.train.feature_dim(),
            "class_count": s.train.class_count(),
            "validation_indices_sha256": fsutil::sha256_hex(
                &s.validation_indices
                    .iter()
                    .flat_map(|&i| (i as u64).to_le_bytes())
                    .collect::<Vec<u8>>()
            ),
        }),
    })
}

/// Blob pool and test set, classes interleaved so that any prefix is
/// balanced.
fn blobs(cfg: &PrepareConfig) -> Result<(Dataset, Dataset)> {
    let l = cfg.blob_classes.max(1);
    let make = |count: usize, stream: u64| -> Result<Dataset> {
        let per_class = count.div_ceil(l).max(1);
        let d = synth_blobs(
            l,
            per_class,
            cfg.blob_dim,
            cfg.blob_separation,
            derive_seed(cfg.seed, stream),
        )?;
        let order: Vec<usize> = (0..per_class * l)
            .map(|i| (i % l) * per_class + i / l)
            .collect();
        Ok(d.select(&order))
    };
    Ok((
        make(cfg.train_count + cfg.validation_count, 1)?,
        make(cfg.test_count, 2)?,
    ))
}

#[cfg(feature = "download")]
fn download_mnist(base: &str, dir: &Path) -> Result<()> {
    for stem in idx::MNIST_FILES {
        if idx::find_mnist_file(dir, stem).is_ok() {
            continue;
        }
        let url = format!("{}/{stem}.gz", base.trim_end_matches('/'));
        eprintln!("fetching {url}");
        let mut resp = ureq::get(&url)
            .call()
            .map_err(|e| Error::Runtime(format!("download of {url} failed: {e}")))?;
        let bytes = resp
            .body_mut()
            .with_config()
            .limit(256 << 20)
            .read_to_vec()
            .map_err(|e| Error::Runtime(format!("download of {url} failed: {e}")))?;
        fsutil::write_atomic(&dir.join(format!("{stem}.gz")), &bytes)?;
    }
    Ok(())
}

#[cfg(not(feature = "download"))]
fn download_mnist(_base: &str, _dir: &Path) -> Result<()> {
    Err(Error::usage(
        "this build has no download support; fetch the MNIST files by hand",
    ))
}

// shared loading

struct Data {
    validation: Dataset,
    test: Dataset,
    paths: Vec<PathBuf>,
}

fn load_split(dir: &str, train_too: bool) -> Result<(Option<Dataset>, Data)> {
    let dir = PathBuf::from(dir);
    let mut paths = Vec::new();
    let train = if train_too {
        let p = dir.join("train.rcd");
        let d = cache::load(&p)?;
        paths.push(p);
        Some(d)
    } else {
        None
    };
    let vp = dir.join("validation.rcd");
    let tp = dir.join("test.rcd");
    let validation = cache::load(&vp)?;
    let test = cache::load(&tp)?;
    paths.push(vp);
    paths.push(tp);
    Ok((
        train,
        Data {
            validation,
            test,
            paths,
        },
    ))
}

fn load_model(path: &str) -> Result<Network> {
    Ok(checkpoint::load(Path::new(path))?.network)
}

fn config_digest<C: Serialize>(cfg: &C) -> Result<String> {
    Ok(fsutil::sha256_hex(&serde_json::to_vec(cfg)?))
}

// train

fn train_cmd(cfg: &mut TrainCmdConfig) -> Result<RunOutput> {
    let mode = match cfg.mode.as_str() {
        "standard" => {
            if cfg.temperature.is_some()
                || cfg.deepfool_max_iters.is_some()
                || cfg.overshoot.is_some()
            {
                return Err(Error::usage(
                    "temperature/deepfool options do not apply to standard mode",
                ));
            }
            TrainMode::Standard
        }
        "adversarial" => {
            let TrainMode::Adversarial {
                deepfool_max_iters,
                overshoot,
            } = TrainMode::adversarial()
            else {
                unreachable!()
            };
            if cfg.temperature.is_some() {
                return Err(Error::usage("temperature only applies to distilled mode"));
            }
            TrainMode::Adversarial {
                deepfool_max_iters: *cfg.deepfool_max_iters.get_or_insert(deepfool_max_iters),
                overshoot: *cfg.overshoot.get_or_insert(overshoot),
            }
        }
        "distilled" => {
            let TrainMode::Distilled { temperature } = TrainMode::distilled() else {
                unreachable!()
            };
            if cfg.deepfool_max_iters.is_some() || cfg.overshoot.is_some() {
                return Err(Error::usage(
                    "deepfool options only apply to adversarial mode",
                ));
            }
            TrainMode::Distilled {
                temperature: *cfg.temperature.get_or_insert(temperature),
            }
        }
        other => {
            return Err(Error::usage(format!(
                "unknown mode {other:?} (expected standard, adversarial or distilled)"
            )))
        }
    };
    let (train_set, data) = load_split(&cfg.data, true)?;
    let train_set = train_set.expect("requested");
    let mut widths = vec![train_set.feature_dim()];
    widths.extend(&cfg.hidden);
    widths.push(train_set.class_count());
    let tc = TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        seed: cfg.seed,
        mode,
    };
    let trained = train(
        &train_set,
        &LayerSpec::mlp(&widths),
        &tc,
        Some(&data.validation),
    )?;
    let mut net = trained.network;
    net.round_to_f32();
    let test_accuracy = accuracy(&net, &data.test)?;
    let validation_accuracy = accuracy(&net, &data.validation)?;
    for e in &trained.log {
        eprintln!(
            "epoch {:>3}  loss {:.5}  validation {:.4}",
            e.epoch,
            e.loss,
            e.validation_accuracy.unwrap_or(f64::NAN)
        );
    }
    eprintln!("test accuracy {test_accuracy:.4}");

    let out = PathBuf::from(&cfg.out);
    let meta = Metadata {
        seed: cfg.seed,
        epochs: cfg.epochs as u32,
        mode: cfg.mode.clone(),
    };
    checkpoint::save(&out, &net, &meta)?;
    let log = json!({
        "mode": cfg.mode,
        "epochs": trained.log.iter().map(|e| json!({
            "epoch": e.epoch,
            "loss": e.loss,
            "validation_accuracy": e.validation_accuracy,
        })).collect::<Vec<_>>(),
        "validation_accuracy": validation_accuracy,
        "test_accuracy": test_accuracy,
        "twins": trained.twins,
        "twins_skipped": trained.twins_skipped,
    });
    let mut log_path = out.as_os_str().to_owned();
    log_path.push(".log.json");
    let log_path = PathBuf::from(log_path);
    fsutil::write_atomic(&log_path, &serde_json::to_vec_pretty(&log)?)?;

    let mut inputs = data.paths;
    inputs.insert(0, PathBuf::from(&cfg.data).join("train.rcd"));
    Ok(RunOutput {
        inputs,
        outputs: vec![out.clone(), log_path],
        primary: out,
        summary: json!({
            "test_accuracy": test_accuracy,
            "validation_accuracy": validation_accuracy,
        }),
    })
}

// attack

type Targeted = Box<dyn TargetedAttack + Send + Sync>;

/// What an attack name stands for.
enum Plan {
    Targeted(Targeted),
    DeepFool(DeepFool),
    /// Untargeted from a targeted campaign.
    FromTargeted(String, NoiseMetric),
    /// Smallest success over constituent campaigns.
    Combined(Vec<String>, NoiseMetric),
}

fn cw_config(cfg: &AttackConfig) -> CwConfig {
    CwConfig {
        inner_iterations: cfg.cw_iterations,
        binary_search_steps: cfg.cw_binary_search_steps,
        inner_learning_rate: cfg.cw_learning_rate,
        abort_early: cfg.cw_abort_early,
        ..CwConfig::default()
    }
    .with_confidence(cfg.confidence)
}

fn cw_name(k: f64) -> String {
    cw_l2_at(&CwConfig::default(), k).name()
}

fn metric_of(name: &str) -> Option<NoiseMetric> {
    let base = name.trim_start_matches("t-").trim_start_matches("u-");
    Some(match base {
        "fgsm" | "igsm" | "cw-linf" | "ca-linf" => NoiseMetric::Linf,
        "jsma" | "cw-l0" | "ca-l0" => NoiseMetric::L0,
        "cw-l2" | "ca-l2" | "deepfool" => NoiseMetric::L2,
        b if b.starts_with("cw-l2-k") => NoiseMetric::L2,
        _ => return None,
    })
}

fn parse_metric(s: &str) -> Result<NoiseMetric> {
    match s {
        "l0" => Ok(NoiseMetric::L0),
        "l2" => Ok(NoiseMetric::L2),
        "linf" => Ok(NoiseMetric::Linf),
        other => Err(Error::usage(format!(
            "unknown metric {other:?} (expected l0, l2 or linf)"
        ))),
    }
}

fn unknown_attack(name: &str) -> Error {
    Error::usage(format!(
        "unknown attack {name:?}; known attacks: {KNOWN_ATTACKS}, u-<targeted name>, combined"
    ))
}

fn plan(name: &str, cfg: &AttackConfig) -> Result<Plan> {
    let cw = cw_config(cfg);
    let targeted: Option<Targeted> = match name {
        "t-fgsm" => Some(Box::new(Fgsm::new(
            regionclf_core::attacks::default_eps_grid(),
        ))),
        "t-igsm" => Some(Box::new(Igsm {
            max_iters: cfg.igsm_max_iters,
            ..Igsm::default()
        })),
        "t-jsma" => Some(Box::new(Jsma {
            max_l0: cfg.jsma_max_l0,
        })),
        "t-cw-l0" => Some(Box::new(CwL0 { config: cw })),
        "t-cw-linf" => Some(Box::new(CwLinf { config: cw })),
        "t-cw-l2" => Some(Box::new(cw_l2_at(&cw, cw.confidence))),
        n => match n.strip_prefix("t-cw-l2-k").map(str::parse::<f64>) {
            Some(Ok(k)) if k >= 0.0 && cw_name(k) == n => Some(Box::new(cw_l2_at(&cw, k))),
            Some(_) => return Err(unknown_attack(n)),
            None => None,
        },
    };
    if let Some(t) = targeted {
        return Ok(Plan::Targeted(t));
    }
    let l2_parts = |prefix: &str| -> Vec<String> {
        let mut ks = cfg.ca_l2_confidences.clone();
        ks.dedup();
        ks.iter()
            .map(|&k| format!("{prefix}{}", cw_name(k).trim_start_matches("t-")))
            .collect()
    };
    Ok(match name {
        "deepfool" => Plan::DeepFool(DeepFool {
            max_iters: cfg.deepfool_max_iters,
            overshoot: cfg.overshoot,
        }),
        "t-ca-l0" => Plan::Combined(vec!["t-jsma".into(), "t-cw-l0".into()], NoiseMetric::L0),
        "t-ca-linf" => Plan::Combined(
            vec!["t-fgsm".into(), "t-igsm".into(), "t-cw-linf".into()],
            NoiseMetric::Linf,
        ),
        "t-ca-l2" => Plan::Combined(l2_parts("t-"), NoiseMetric::L2),
        "u-ca-l0" => Plan::Combined(vec!["u-jsma".into(), "u-cw-l0".into()], NoiseMetric::L0),
        "u-ca-linf" => Plan::Combined(
            vec!["u-fgsm".into(), "u-igsm".into(), "u-cw-linf".into()],
            NoiseMetric::Linf,
        ),
        "u-ca-l2" => {
            let mut parts = l2_parts("u-");
            parts.push("deepfool".into());
            Plan::Combined(parts, NoiseMetric::L2)
        }
        n => match n.strip_prefix("u-") {
            Some(rest) if !rest.starts_with("ca-") => {
                let base = format!("t-{rest}");
                match plan(&base, cfg)? {
                    Plan::Targeted(_) => {
                        Plan::FromTargeted(base, metric_of(n).ok_or_else(|| unknown_attack(n))?)
                    }
                    _ => return Err(unknown_attack(n)),
                }
            }
            _ => return Err(unknown_attack(n)),
        },
    })
}

/// Path of a constituent campaign next to the main outcomes file.
fn part_path(out: &Path, name: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.{name}.csv"))
}

fn targets_for(label: usize, class_count: usize, limit: Option<usize>) -> Vec<usize> {
    (0..class_count)
        .filter(|&t| t != label)
        .take(limit.unwrap_or(usize::MAX))
        .collect()
}

/// Runs `one` for every benign example, rewriting `path` after each batch
/// of examples so an interrupted run can resume. With `resume`, records of
/// complete examples already in `path` are kept.
fn resumable(
    path: &Path,
    name: &str,
    benign: &[Benign],
    per_example: &(dyn Fn(&Benign) -> usize + Sync),
    resume: bool,
    one: &(dyn Fn(&Benign) -> Result<Vec<OutcomeRecord>> + Sync),
) -> Result<Vec<OutcomeRecord>> {
    let mut done: Vec<OutcomeRecord> = Vec::new();
    let mut start = 0;
    let mut unchanged = false;
    if resume && path.is_file() {
        let old = records::read_outcomes(path)?;
        let mut at = 0;
        for b in benign {
            let want = per_example(b);
            let complete = old.get(at..at + want).is_some_and(|g| {
                g.iter().all(|r| {
                    r.example_id == b.id && r.attack_name == name && r.true_label == b.label
                })
            });
            if !complete {
                break;
            }
            at += want;
            start += 1;
        }
        unchanged = at == old.len();
        done.extend(old.into_iter().take(at));
        if start > 0 {
            eprintln!("{name}: resuming after {start} finished examples");
        }
    }
    if start == benign.len() {
        if !unchanged {
            records::write_outcomes(path, &done)?;
        }
        return Ok(done);
    }
    let batch = rayon::current_num_threads().max(1);
    for chunk in benign[start..].chunks(batch) {
        let fresh: Vec<Vec<OutcomeRecord>> = chunk.par_iter().map(one).collect::<Result<_>>()?;
        done.extend(fresh.into_iter().flatten());
        records::write_outcomes(path, &done)?;
    }
    eprintln!("{name}: {} records in {}", done.len(), path.display());
    Ok(done)
}

struct Campaign<'a> {
    cfg: &'a AttackConfig,
    net: &'a Network,
    benign: &'a [Benign],
    out: PathBuf,
    main: String,
    written: Vec<PathBuf>,
}

impl Campaign<'_> {
    fn path_for(&self, name: &str) -> PathBuf {
        if name == self.main {
            self.out.clone()
        } else {
            part_path(&self.out, name)
        }
    }

    fn records(&mut self, name: &str) -> Result<Vec<OutcomeRecord>> {
        let path = self.path_for(name);
        let (net, cfg) = (self.net, self.cfg);
        let class_count = net.class_count();
        let recs = match plan(name, cfg)? {
            Plan::Targeted(attack) => {
                let per = |b: &Benign| targets_for(b.label, class_count, cfg.targets).len();
                let one = |b: &Benign| -> Result<Vec<OutcomeRecord>> {
                    targets_for(b.label, class_count, cfg.targets)
                        .into_iter()
                        .map(|t| Ok(targeted_record(attack.as_ref(), net, b, t, cfg.seed)?))
                        .collect()
                };
                resumable(&path, name, self.benign, &per, cfg.resume, &one)?
            }
            Plan::DeepFool(df) => {
                let one = |b: &Benign| -> Result<Vec<OutcomeRecord>> {
                    Ok(vec![untargeted_record(&df, net, b, cfg.seed)?])
                };
                resumable(&path, name, self.benign, &|_| 1, cfg.resume, &one)?
            }
            Plan::FromTargeted(base, metric) => {
                let targeted = self.records(&base)?;
                let recs = untargeted_from_records(&targeted, self.benign, name, metric)?;
                records::write_outcomes(&path, &recs)?;
                recs
            }
            Plan::Combined(parts, metric) => {
                let mut campaigns = Vec::with_capacity(parts.len());
                for p in &parts {
                    campaigns.push(self.records(p)?);
                }
                let slices: Vec<&[OutcomeRecord]> = campaigns.iter().map(Vec::as_slice).collect();
                let recs = combine_records(&slices, self.benign, name, metric)?;
                records::write_outcomes(&path, &recs)?;
                recs
            }
        };
        for p in [path.clone(), records::adv_path(&path)] {
            if !self.written.contains(&p) {
                self.written.push(p);
            }
        }
        Ok(recs)
    }
}

fn attack(cfg: &mut AttackConfig) -> Result<RunOutput> {
    let requested = if cfg.attack == "combined" {
        let metric = cfg
            .metric
            .as_deref()
            .ok_or_else(|| Error::usage("attack `combined` needs --metric l0, l2 or linf"))?;
        parse_metric(metric)?;
        format!("t-ca-{metric}")
    } else if cfg.metric.is_some() {
        return Err(Error::usage("--metric only applies to `combined`"));
    } else {
        cfg.attack.clone()
    };
    if cfg.examples == 0 {
        return Err(Error::usage("--examples must be at least 1"));
    }
    if cfg.targets == Some(0) {
        return Err(Error::usage("--targets must be at least 1"));
    }
    let name = match plan(&requested, cfg)? {
        Plan::Targeted(a) => a.name(),
        _ => requested,
    };
    let out = PathBuf::from(
        cfg.out
            .get_or_insert_with(|| format!("runs/{name}.csv"))
            .clone(),
    );
    let (_, data) = load_split(&cfg.data, false)?;
    let net = load_model(&cfg.model)?;
    let benign = regionclf_core::evaluation::select_benign(&net, &data.test, cfg.examples)?;
    let mut campaign = Campaign {
        cfg,
        net: &net,
        benign: &benign,
        out: out.clone(),
        main: name.clone(),
        written: Vec::new(),
    };
    let recs = campaign.records(&name)?;
    let written = campaign.written;
    let successes = recs.iter().filter(|r| r.outcome.success).count();
    eprintln!(
        "{name}: {successes}/{} successful against the point classifier",
        recs.len()
    );
    let mut inputs = vec![PathBuf::from(&cfg.model)];
    inputs.extend(data.paths.into_iter().filter(|p| p.ends_with("test.rcd")));
    Ok(RunOutput {
        inputs,
        outputs: written,
        primary: out,
        summary: json!({
            "attack": name,
            "records": recs.len(),
            "successes": successes,
        }),
    })
}

// defend / measure / sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusFile {
    pub radius: f64,
    pub learned: bool,
    pub r0: f64,
    pub step: f64,
    pub m: usize,
    pub seed: u64,
    pub validation_examples: usize,
    pub point_correct: Option<usize>,
    pub steps: Vec<(f64, bool)>,
}

/// `r` if given, else `radius.json` if given, else a learned radius.
#[allow(clippy::too_many_arguments)]
fn radius(
    net: &Network,
    validation: &Dataset,
    r: Option<f64>,
    radius_file: Option<&str>,
    r0: f64,
    step: f64,
    m: usize,
    seed: u64,
    validation_examples: Option<usize>,
    inputs: &mut Vec<PathBuf>,
) -> Result<RadiusFile> {
    if r.is_some() && radius_file.is_some() {
        return Err(Error::usage("give either --r or --radius-file, not both"));
    }
    if let Some(r) = r {
        return Ok(RadiusFile {
            radius: r,
            learned: false,
            r0,
            step,
            m,
            seed,
            validation_examples: 0,
            point_correct: None,
            steps: Vec::new(),
        });
    }
    if let Some(path) = radius_file {
        let path = PathBuf::from(path);
        let file: RadiusFile = serde_json::from_slice(&fsutil::read(&path)?)
            .map_err(|e| Error::format(&path, e.to_string()))?;
        inputs.push(path);
        return Ok(file);
    }
    let val = validation.take(validation_examples.unwrap_or(validation.len()));
    let search = parallel::learn_radius(net, &val, m, r0, step, seed)?;
    eprintln!(
        "learned r = {} ({} of {} validation examples correct at r = 0)",
        search.radius,
        search.point_correct,
        val.len()
    );
    Ok(RadiusFile {
        radius: search.radius,
        learned: true,
        r0,
        step,
        m,
        seed,
        validation_examples: val.len(),
        point_correct: Some(search.point_correct),
        steps: search.steps.iter().map(|s| (s.radius, s.passed)).collect(),
    })
}

fn model_name(path: &str) -> String {
    Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.into())
}

fn defend(cfg: &mut DefendConfig) -> Result<RunOutput> {
    let (_, data) = load_split(&cfg.data, false)?;
    let net = load_model(&cfg.model)?;
    let mut inputs = vec![PathBuf::from(&cfg.model)];
    inputs.extend(data.paths.iter().cloned());
    let rf = radius(
        &net,
        &data.validation,
        cfg.r,
        None,
        cfg.r0,
        cfg.step,
        cfg.m,
        cfg.seed,
        cfg.validation_examples,
        &mut inputs,
    )?;
    let rc = RegionClassifier::new(net.clone(), rf.radius, cfg.m, cfg.seed)?;
    let point = PointJudge {
        name: "point",
        net: &net,
    };
    let region = RegionJudge {
        name: "region",
        rc: &rc,
    };
    let test = data.test.take(cfg.test_examples.unwrap_or(data.test.len()));
    let mut accuracy_rows = Vec::new();
    for judge in [&point as &(dyn Judge + Sync), &region] {
        accuracy_rows.push(AccuracyRow {
            classifier: judge.name(),
            accuracy: parallel::judge_accuracy(judge, &test, benign_stream())?,
            examples: test.len(),
        });
    }
    for extra in &cfg.extra_models {
        let other = load_model(extra)?;
        inputs.push(PathBuf::from(extra));
        accuracy_rows.push(AccuracyRow {
            classifier: model_name(extra),
            accuracy: accuracy(&other, &test)?,
            examples: test.len(),
        });
    }
    let digest = config_digest(cfg)?;
    let mut report_rows = Vec::new();
    for path in &cfg.outcomes {
        let path = PathBuf::from(path);
        let recs = records::read_outcomes(&path)?;
        inputs.push(path.clone());
        inputs.push(records::adv_path(&path));
        for judge in [&point as &(dyn Judge + Sync), &region] {
            let rep = parallel::evaluate(judge, &recs, &digest)?;
            report_rows.push(ReportRow::new(&rep, "", None));
        }
    }
    for row in &accuracy_rows {
        eprintln!("accuracy {:<12} {:.4}", row.classifier, row.accuracy);
    }
    print_reports(&report_rows);

    let dir = PathBuf::from(&cfg.out);
    let radius_path = dir.join("radius.json");
    let accuracy_path = dir.join("accuracy.csv");
    let report_path = dir.join("report.csv");
    fsutil::write_atomic(&radius_path, &serde_json::to_vec_pretty(&rf)?)?;
    records::write_accuracy(&accuracy_path, &accuracy_rows)?;
    records::write_reports(&report_path, &report_rows)?;
    Ok(RunOutput {
        inputs,
        outputs: vec![radius_path, accuracy_path, report_path],
        primary: dir,
        summary: json!({
            "radius": rf.radius,
            "accuracy": accuracy_rows.iter().map(|r| (r.classifier.clone(), r.accuracy)).collect::<std::collections::BTreeMap<_, _>>(),
        }),
    })
}

fn benign_from_test(test: &Dataset, id: usize) -> Result<Benign> {
    if id >= test.len() {
        return Err(Error::usage(format!(
            "example {id} is outside the {}-example test set",
            test.len()
        )));
    }
    Ok(Benign {
        id,
        features: test.row(id).to_vec(),
        label: test.label(id),
    })
}

fn measure(cfg: &mut MeasureConfig) -> Result<RunOutput> {
    if cfg.m == 0 {
        return Err(Error::usage("--m must be at least 1"));
    }
    let (_, data) = load_split(&cfg.data, false)?;
    let net = load_model(&cfg.model)?;
    let mut inputs = vec![PathBuf::from(&cfg.model)];
    inputs.extend(
        data.paths
            .iter()
            .filter(|p| p.ends_with("test.rcd"))
            .cloned(),
    );
    if cfg.r.is_none() && cfg.radius_file.is_none() {
        return Err(Error::usage("measure needs --r or --radius-file"));
    }
    let rf = radius(
        &net,
        &data.validation,
        cfg.r,
        cfg.radius_file.as_deref(),
        0.0,
        0.0,
        cfg.m,
        cfg.seed,
        None,
        &mut inputs,
    )?;

    let mut points: Vec<(MeasuredPoint, Vec<f64>)> = Vec::new();
    if let Some(path) = &cfg.outcomes {
        let path = PathBuf::from(path);
        for r in records::read_outcomes(&path)?
            .into_iter()
            .filter(|r| r.outcome.success)
        {
            points.push((
                MeasuredPoint {
                    item: points.len(),
                    source: r.attack_name.clone(),
                    example_id: r.example_id,
                    target: r.target(),
                    true_label: r.true_label,
                },
                r.outcome.adversarial,
            ));
        }
        inputs.push(path.clone());
        inputs.push(records::adv_path(&path));
    }
    for &id in &cfg.ids {
        let b = benign_from_test(&data.test, id)?;
        points.push((
            MeasuredPoint {
                item: points.len(),
                source: "benign".into(),
                example_id: id,
                target: None,
                true_label: b.label,
            },
            b.features,
        ));
    }
    if points.is_empty() {
        return Err(Error::usage(
            "nothing to measure: give --ids or --outcomes with successes",
        ));
    }
    let (r, m, seed) = (rf.radius, cfg.m, cfg.seed);
    let rows: Vec<Vec<records::HistogramRow>> = points
        .par_iter()
        .map(|(p, x)| {
            let s = derive_seed(seed, p.item as u64);
            let votes = label_histogram(&net, x, r, m, s)?;
            Ok(records::histogram_rows(p, &votes, r, s))
        })
        .collect::<Result<_>>()?;
    let plurality_true = rows
        .iter()
        .filter(|h| {
            let best = h
                .iter()
                .max_by(|a, b| a.count.cmp(&b.count).then(b.class.cmp(&a.class)));
            best.is_some_and(|b| b.class == b.true_label)
        })
        .count();
    eprintln!(
        "{plurality_true} of {} histograms have the true label as plurality",
        rows.len()
    );
    let out = PathBuf::from(&cfg.out);
    let flat: Vec<_> = rows.into_iter().flatten().collect();
    records::write_histograms(&out, &flat)?;
    Ok(RunOutput {
        inputs,
        outputs: vec![out.clone()],
        primary: out,
        summary: json!({
            "points": points.len(),
            "plurality_true_label": plurality_true,
            "r": r,
        }),
    })
}

fn sweep(cfg: &mut SweepConfig) -> Result<RunOutput> {
    let kind = cfg.kind.clone();
    if cfg.grid.is_empty() {
        cfg.grid = match kind.as_str() {
            "alpha" => vec![0.0, 0.5, 1.0, 2.0, 4.0],
            "confidence" => vec![0.0, 10.0, 20.0],
            _ => Vec::new(),
        };
    }
    if kind != "alpha" && kind != "confidence" {
        return Err(Error::usage(format!(
            "unknown sweep kind {kind:?} (expected alpha or confidence)"
        )));
    }
    if cfg.classifier != "region" && cfg.classifier != "point" {
        return Err(Error::usage("--classifier must be region or point"));
    }
    let (_, data) = load_split(&cfg.data, false)?;
    let net = load_model(&cfg.model)?;
    let mut inputs = vec![PathBuf::from(&cfg.model)];
    inputs.extend(data.paths.iter().cloned());
    let rf = radius(
        &net,
        &data.validation,
        cfg.r,
        cfg.radius_file.as_deref(),
        cfg.r0,
        cfg.step,
        cfg.m,
        cfg.seed,
        cfg.validation_examples,
        &mut inputs,
    )?;
    let rc = RegionClassifier::new(net.clone(), rf.radius, cfg.m, cfg.seed)?;
    let point = PointJudge {
        name: "point",
        net: &net,
    };
    let region = RegionJudge {
        name: "region",
        rc: &rc,
    };
    let judge: &(dyn Judge + Sync) = if cfg.classifier == "region" {
        &region
    } else {
        &point
    };
    let digest = config_digest(cfg)?;
    let out = PathBuf::from(&cfg.out);
    let mut outputs = Vec::new();
    let mut rows = Vec::new();
    if kind == "alpha" {
        let path = PathBuf::from(
            cfg.outcomes
                .as_deref()
                .ok_or_else(|| Error::usage("the alpha sweep needs --outcomes"))?,
        );
        let recs = records::read_outcomes(&path)?;
        inputs.push(path.clone());
        inputs.push(records::adv_path(&path));
        let mut ids: Vec<usize> = recs.iter().map(|r| r.example_id).collect();
        ids.dedup();
        let benign = ids
            .iter()
            .map(|&id| benign_from_test(&data.test, id))
            .collect::<Result<Vec<_>>>()?;
        let base_name = recs
            .first()
            .map(|r| r.attack_name.clone())
            .unwrap_or_default();
        for (alpha, rep) in parallel::alpha_sweep(judge, &recs, &benign, &cfg.grid, &digest)? {
            let mut row = ReportRow::new(&rep, "alpha", Some(alpha));
            row.attack = base_name.clone();
            rows.push(row);
        }
    } else {
        if cfg.outcomes.is_some() {
            return Err(Error::usage(
                "the confidence sweep runs its own attacks; drop --outcomes",
            ));
        }
        let benign = regionclf_core::evaluation::select_benign(&net, &data.test, cfg.examples)?;
        let attack_cfg = AttackConfig {
            data: cfg.data.clone(),
            model: cfg.model.clone(),
            examples: cfg.examples,
            targets: cfg.targets,
            seed: cfg.seed,
            resume: cfg.resume,
            cw_iterations: cfg.cw_iterations,
            cw_binary_search_steps: cfg.cw_binary_search_steps,
            cw_learning_rate: cfg.cw_learning_rate,
            ..AttackConfig::default()
        };
        let mut campaign = Campaign {
            cfg: &attack_cfg,
            net: &net,
            benign: &benign,
            out: out.clone(),
            main: String::new(),
            written: Vec::new(),
        };
        for &k in &cfg.grid {
            if !(k >= 0.0) {
                return Err(Error::usage("confidences must be non-negative"));
            }
            let recs = campaign.records(&cw_name(k))?;
            let rep = parallel::evaluate(judge, &recs, &digest)?;
            rows.push(ReportRow::new(&rep, "confidence", Some(k)));
        }
        outputs.extend(campaign.written);
    }
    print_reports(&rows);
    records::write_reports(&out, &rows)?;
    outputs.insert(0, out.clone());
    Ok(RunOutput {
        inputs,
        outputs,
        primary: out,
        summary: json!({
            "kind": kind,
            "radius": rf.radius,
            "success_rates": rows.iter().map(|r| r.success_rate).collect::<Vec<_>>(),
        }),
    })
}

fn report(cfg: &mut ReportConfig) -> Result<RunOutput> {
    if cfg.inputs.is_empty() {
        return Err(Error::usage("report needs --inputs"));
    }
    let mut rows = Vec::new();
    let mut inputs = Vec::new();
    for p in &cfg.inputs {
        let p = PathBuf::from(p);
        rows.extend(records::read_reports(&p)?);
        inputs.push(p);
    }
    print_reports(&rows);
    let mut outputs = Vec::new();
    let primary = match &cfg.out {
        Some(out) => {
            let out = PathBuf::from(out);
            records::write_reports(&out, &rows)?;
            outputs.push(out.clone());
            out
        }
        None => PathBuf::from(&cfg.inputs[0]),
    };
    Ok(RunOutput {
        inputs,
        outputs,
        primary,
        summary: json!({ "rows": rows.len() }),
    })
}

fn print_reports(rows: &[ReportRow]) {
    if rows.is_empty() {
        return;
    }
    println!(
        "{:<12} {:<22} {:>10} {:>9} {:>9} {:>9} {:>9}",
        "classifier", "attack", "grid", "SR", "L0", "L2", "Linf"
    );
    let opt = |v: Option<f64>| v.map_or("/".to_string(), |v| format!("{v:.3}"));
    for r in rows {
        let grid = match r.value {
            Some(v) => format!("{}={v}", r.grid),
            None => String::new(),
        };
        println!(
            "{:<12} {:<22} {:>10} {:>8.1}% {:>9} {:>9} {:>9}",
            r.classifier,
            r.attack,
            grid,
            100.0 * r.success_rate,
            opt(r.avg_l0),
            opt(r.avg_l2),
            opt(r.avg_linf)
        );
    }
}
