//! The `spml` command line.
//!
//! ```text
//! spml synth          --out DIR [--seed N ...]
//! spml spotting-freqs --annotations A.json --spotting S.json --out F.json
//! spml gen-labels     --annotations A.json --bias uniform,size --seeds 1,2,3 --out DIR
//! spml train          --features F.spmlf --realization R.json --annotations A.json --loss an --out M.json
//! spml eval           --model M.json --features F.spmlf --annotations T.json --loss an --bias size --seed 1 --out X.json
//! spml report         --metrics DIR --out DIR
//! ```
//!
//! Every subcommand also takes `--config FILE`, a JSON object with the same
//! field names as the long flags (snake_case); flags win over the file.
//!
//! Exit codes: 0 success, 2 usage/config, 3 data/integrity, 4 training
//! divergence. `SPML_LOG` sets log verbosity (default `warn`).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use thiserror::Error;

use crate::bias::{self, BiasKind, BiasModelSpec, SemanticFallback, DEFAULT_EPSILON};
use crate::dataset::{Dataset, Split};
use crate::ingest::{self, FeatureMatrix};
use crate::losses::{LossKind, LossSpec, DEFAULT_EM_ALPHA, DEFAULT_LS_EPSILON, DEFAULT_ROLE_LAMBDA};
use crate::metrics::{self, CategoryAp, MapTable, RunRecord};
use crate::sampler::{self, SampleError};
use crate::synth::{self, SynthConfig};
use crate::trainer::{self, LinearModel, Optimizer, TrainConfig, TrainError, Validation};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged: {0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }
}

impl From<ingest::IngestError> for CliError {
    fn from(e: ingest::IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Divergence { .. } => CliError::Divergence(e.to_string()),
            TrainError::Config(_) | TrainError::Loss(_) => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "spml", version, about = "Single-positive multi-label label-bias toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample seeded single-positive realizations from full annotations.
    GenLabels(GenLabelsArgs),
    /// Count spotting points that fall inside same-category boxes.
    SpottingFreqs(SpottingFreqsArgs),
    /// Train a linear classifier on one realization.
    Train(TrainArgs),
    /// Compute test MAP of a trained model and write a tagged metrics file.
    Eval(EvalArgs),
    /// Aggregate metrics files into a MAP table with bias-drop summary.
    Report(ReportArgs),
    /// Write a deterministic synthetic corpus.
    Synth(SynthArgs),
}

macro_rules! merge_from {
    ($cli:expr, $file:expr, [$($field:ident),* $(,)?]) => {
        $( if $cli.$field.is_none() { $cli.$field = $file.$field; } )*
    };
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("missing required --{flag}")))
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    ingest::write_atomic(path, bytes).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))
}

fn load_dataset(path: &Path, split: Split) -> Result<Dataset, CliError> {
    let parsed = ingest::parse_annotations(&read_input(path)?, split)?;
    if parsed.stats.dropped_boxes > 0 {
        log::warn!("{}: dropped {} degenerate boxes", path.display(), parsed.stats.dropped_boxes);
    }
    Ok(parsed.dataset)
}

fn load_features(path: &Path) -> Result<FeatureMatrix, CliError> {
    Ok(ingest::read_features(read_input(path)?.as_slice())?)
}

#[derive(Debug, Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct GenLabelsArgs {
    /// COCO instances JSON of the training split.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Bias model(s), comma separated: uniform, size, location, semantic.
    #[arg(long, value_delimiter = ',')]
    pub bias: Option<Vec<BiasKind>>,
    /// Seeds, comma separated; one realization per seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Spotting JSON; required for the semantic bias.
    #[arg(long)]
    pub spotting: Option<PathBuf>,
    /// Location-bias ε in pixels.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Semantic bias behaviour when all positives have zero frequency.
    #[arg(long)]
    pub semantic_fallback: Option<SemanticFallback>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// `<bias>_seed<seed>.json`
pub fn realization_file_name(bias: BiasKind, seed: u64) -> String {
    format!("{bias}_seed{seed}.json")
}

fn gen_labels(mut args: GenLabelsArgs) -> Result<(), CliError> {
    if let Some(path) = args.config.clone() {
        let file: GenLabelsArgs = load_config(&path)?;
        merge_from!(args, file, [annotations, bias, seeds, spotting, epsilon, semantic_fallback, out]);
    }
    let annotations = required(args.annotations, "annotations")?;
    let biases = required(args.bias, "bias")?;
    let seeds = required(args.seeds, "seeds")?;
    let out = required(args.out, "out")?;
    if biases.is_empty() || seeds.is_empty() {
        return Err(CliError::Config("--bias and --seeds must not be empty".into()));
    }
    if biases.contains(&BiasKind::Semantic) && args.spotting.is_none() {
        return Err(CliError::Config("semantic bias needs --spotting".into()));
    }
    let epsilon = args.epsilon.unwrap_or(DEFAULT_EPSILON);
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(CliError::Config(format!("--epsilon must be > 0, got {epsilon}")));
    }

    let dataset = load_dataset(&annotations, Split::Train)?;
    let mut specs = Vec::with_capacity(biases.len());
    for kind in &biases {
        specs.push(match kind {
            BiasKind::Uniform => BiasModelSpec::Uniform,
            BiasKind::Size => BiasModelSpec::Size,
            BiasKind::Location => BiasModelSpec::location(epsilon).map_err(|e| CliError::Config(e.to_string()))?,
            BiasKind::Semantic => {
                let path = args.spotting.as_ref().expect("checked above");
                let points: Vec<_> =
                    ingest::parse_spotting(&read_input(path)?, &dataset)?.into_iter().map(|p| p.point).collect();
                let freqs = bias::spotting_frequencies(&dataset, &points);
                BiasModelSpec::semantic(freqs, args.semantic_fallback.unwrap_or_default())
            }
        });
    }
    let suite = sampler::generate_suite(&dataset, &specs, &seeds).map_err(|e| match e {
        SampleError::DuplicateSeed(_) => CliError::Config(e.to_string()),
        other => CliError::Data(other.to_string()),
    })?;

    create_dir(&out)?;
    for r in &suite {
        let mut bytes = Vec::new();
        ingest::write_realization(r, dataset.categories(), &mut bytes)?;
        write_output(&out.join(realization_file_name(r.bias.kind, r.seed)), &bytes)?;
    }
    log::info!("wrote {} realizations to {}", suite.len(), out.display());
    Ok(())
}

#[derive(Debug, Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SpottingFreqsArgs {
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub spotting: Option<PathBuf>,
    /// Output frequency JSON file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn spotting_freqs(mut args: SpottingFreqsArgs) -> Result<(), CliError> {
    if let Some(path) = args.config.clone() {
        let file: SpottingFreqsArgs = load_config(&path)?;
        merge_from!(args, file, [annotations, spotting, out]);
    }
    let annotations = required(args.annotations, "annotations")?;
    let spotting = required(args.spotting, "spotting")?;
    let out = required(args.out, "out")?;
    let dataset = load_dataset(&annotations, Split::Val)?;
    let points: Vec<_> = ingest::parse_spotting(&read_input(&spotting)?, &dataset)?.into_iter().map(|p| p.point).collect();
    let freqs = bias::spotting_frequencies(&dataset, &points);
    write_output(&out, &ingest::write_frequencies(&freqs, dataset.categories()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    /// SPMLF features of the training images.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub realization: Option<PathBuf>,
    /// Training annotations (defines the category set).
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// an, an-ls, role or em.
    #[arg(long)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub ls_epsilon: Option<f64>,
    #[arg(long)]
    pub em_alpha: Option<f64>,
    /// Expected positives per image (ROLE).
    #[arg(long)]
    pub role_k: Option<f64>,
    #[arg(long)]
    pub role_lambda: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
    #[arg(long)]
    pub val_features: Option<PathBuf>,
    #[arg(long)]
    pub val_annotations: Option<PathBuf>,
    /// Output model JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional per-epoch training log JSON.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// Builds a [`LossSpec`] from a kind plus optional parameters, filling
/// defaults. ROLE has no default `k`.
pub fn loss_spec(
    kind: LossKind,
    ls_epsilon: Option<f64>,
    em_alpha: Option<f64>,
    role_k: Option<f64>,
    role_lambda: Option<f64>,
) -> Result<LossSpec, CliError> {
    let spec = match kind {
        LossKind::An => Ok(LossSpec::An),
        LossKind::AnLs => LossSpec::an_ls(ls_epsilon.unwrap_or(DEFAULT_LS_EPSILON)),
        LossKind::Em => LossSpec::em(em_alpha.unwrap_or(DEFAULT_EM_ALPHA)),
        LossKind::Role => {
            let k = required(role_k, "role-k")?;
            LossSpec::role(k, role_lambda.unwrap_or(DEFAULT_ROLE_LAMBDA))
        }
    };
    spec.map_err(|e| CliError::Config(e.to_string()))
}

fn train_cmd(mut args: TrainArgs) -> Result<(), CliError> {
    if let Some(path) = args.config.clone() {
        let file: TrainArgs = load_config(&path)?;
        merge_from!(
            args,
            file,
            [
                features,
                realization,
                annotations,
                loss,
                ls_epsilon,
                em_alpha,
                role_k,
                role_lambda,
                lr,
                epochs,
                batch_size,
                optimizer,
                shuffle_seed,
                val_features,
                val_annotations,
                out,
                log
            ]
        );
    }
    let features_path = required(args.features, "features")?;
    let realization_path = required(args.realization, "realization")?;
    let annotations = required(args.annotations, "annotations")?;
    let out = required(args.out, "out")?;
    let loss = loss_spec(required(args.loss, "loss")?, args.ls_epsilon, args.em_alpha, args.role_k, args.role_lambda)?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: args.lr.unwrap_or(defaults.learning_rate),
        epochs: args.epochs.unwrap_or(defaults.epochs),
        batch_size: args.batch_size.unwrap_or(defaults.batch_size),
        optimizer: match args.optimizer.unwrap_or(OptimizerKind::Adam) {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::adam(),
        },
        shuffle_seed: args.shuffle_seed.unwrap_or(defaults.shuffle_seed),
    };

    let train_set = load_dataset(&annotations, Split::Train)?;
    let features = load_features(&features_path)?;
    let realization = ingest::read_realization(read_input(&realization_path)?.as_slice(), train_set.categories())?;
    realization.validate_against(&train_set).map_err(CliError::Data)?;

    let val = match (args.val_features, args.val_annotations) {
        (Some(f), Some(a)) => Some((load_features(&f)?, load_dataset(&a, Split::Val)?)),
        (None, None) => None,
        _ => return Err(CliError::Config("--val-features and --val-annotations go together".into())),
    };
    let validation = val.as_ref().map(|(features, dataset)| Validation { features, dataset });
    let (model, log) = trainer::train(&features, &realization, train_set.num_labels(), &loss, &cfg, validation)?;
    write_output(&out, &model.to_json())?;
    if let Some(path) = args.log {
        let mut bytes = serde_json::to_vec_pretty(&log).expect("train log serializes");
        bytes.push(b'\n');
        write_output(&path, &bytes)?;
    }
    Ok(())
}

#[derive(Debug, Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Fully labeled evaluation annotations.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Run tag: loss used for training.
    #[arg(long)]
    pub loss: Option<LossKind>,
    /// Run tag: bias of the training realization.
    #[arg(long)]
    pub bias: Option<BiasKind>,
    /// Run tag: realization seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output metrics JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn eval_cmd(mut args: EvalArgs) -> Result<(), CliError> {
    if let Some(path) = args.config.clone() {
        let file: EvalArgs = load_config(&path)?;
        merge_from!(args, file, [model, features, annotations, loss, bias, seed, out]);
    }
    let model_path = required(args.model, "model")?;
    let features_path = required(args.features, "features")?;
    let annotations = required(args.annotations, "annotations")?;
    let loss = required(args.loss, "loss")?;
    let bias = required(args.bias, "bias")?;
    let seed = required(args.seed, "seed")?;
    let out = required(args.out, "out")?;

    let model = LinearModel::from_json(&read_input(&model_path)?).map_err(|e| CliError::Data(e.to_string()))?;
    let features = load_features(&features_path)?;
    let dataset = load_dataset(&annotations, Split::Test)?;
    let summary = trainer::evaluate(&model, &features, &dataset).map_err(|e| CliError::Data(e.to_string()))?;
    let cats = dataset.categories();
    let record = RunRecord {
        bias,
        loss,
        map: summary.map,
        per_category: summary
            .per_category
            .iter()
            .enumerate()
            .map(|(k, ap)| CategoryAp { ap: *ap, category_id: cats.external(k) })
            .collect(),
        seed,
    };
    let mut bytes = serde_json::to_vec_pretty(&record).expect("metrics serialize");
    bytes.push(b'\n');
    write_output(&out, &bytes)
}

#[derive(Debug, Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ReportArgs {
    /// Directory of metrics JSON files written by `eval`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Output directory for report.md and report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// Reads every `*.json` in `dir`, in file-name order.
pub fn read_run_records(dir: &Path) -> Result<Vec<RunRecord>, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            serde_json::from_slice(&read_input(p)?).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn report_cmd(mut args: ReportArgs) -> Result<(), CliError> {
    if let Some(path) = args.config.clone() {
        let file: ReportArgs = load_config(&path)?;
        merge_from!(args, file, [metrics, out]);
    }
    let metrics_dir = required(args.metrics, "metrics")?;
    let out = required(args.out, "out")?;
    let runs = read_run_records(&metrics_dir)?;
    if runs.is_empty() {
        return Err(CliError::Data(format!("no metrics files in {}", metrics_dir.display())));
    }
    let table = MapTable::from_runs(&runs);
    for loss in table.losses() {
        for bias in BiasKind::ALL {
            if table.get(loss, bias).is_none() {
                log::warn!("no runs for ({}, {bias}); cell left empty", loss.label());
            }
        }
    }
    let drops = match metrics::drop_report(&table) {
        Ok(d) => Some(d),
        Err(e) => {
            log::warn!("drop summary omitted: {e}");
            None
        }
    };
    create_dir(&out)?;
    write_output(&out.join("report.md"), metrics::render_markdown(&table, drops.as_ref()).as_bytes())?;
    write_output(&out.join("report.json"), &metrics::render_json(&table, drops.as_ref()))
}

#[derive(Debug, Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub num_labels: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Inclusive object-count range, `min,max`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub objects_per_image: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub size_skew: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub spotting_freqs: Option<Vec<u64>>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub zero_area_rate: Option<f64>,
    #[arg(long)]
    pub centered_rate: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn synth_cmd(mut args: SynthArgs) -> Result<(), CliError> {
    if let Some(path) = args.config.clone() {
        let file: SynthArgs = load_config(&path)?;
        merge_from!(
            args,
            file,
            [
                n_train,
                n_test,
                num_labels,
                dim,
                objects_per_image,
                size_skew,
                spotting_freqs,
                noise_sigma,
                seed,
                zero_area_rate,
                centered_rate,
                out
            ]
        );
    }
    let out = required(args.out, "out")?;
    let d = SynthConfig::default();
    let objects_per_image = match args.objects_per_image.as_deref() {
        None => d.objects_per_image,
        Some(&[lo, hi]) => [lo, hi],
        Some(_) => return Err(CliError::Config("--objects-per-image takes min,max".into())),
    };
    let cfg = SynthConfig {
        n_train: args.n_train.unwrap_or(d.n_train),
        n_test: args.n_test.unwrap_or(d.n_test),
        num_labels: args.num_labels.unwrap_or(d.num_labels),
        dim: args.dim.unwrap_or(d.dim),
        objects_per_image,
        size_skew: args.size_skew.unwrap_or_default(),
        spotting_freqs: args.spotting_freqs.unwrap_or_default(),
        noise_sigma: args.noise_sigma.unwrap_or(d.noise_sigma),
        seed: args.seed.unwrap_or(d.seed),
        zero_area_rate: args.zero_area_rate.unwrap_or(d.zero_area_rate),
        centered_rate: args.centered_rate.unwrap_or(d.centered_rate),
    };
    let corpus = synth::generate(&cfg).map_err(|e| match e {
        synth::SynthError::Config(m) => CliError::Config(m),
        other => CliError::Data(other.to_string()),
    })?;
    create_dir(&out)?;
    corpus.write_to(&out).map_err(|e| CliError::Config(e.to_string()))
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenLabels(a) => gen_labels(a),
        Command::SpottingFreqs(a) => spotting_freqs(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Synth(a) => synth_cmd(a),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPML_LOG", "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
