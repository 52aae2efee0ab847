//! The `xmreid` command-line driver.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
//! 4 data validation error, 5 numerical failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;
use xmreid_core::cca::{fit_cca, CcaError, Scenario};
use xmreid_core::dataset::{Dataset, SplitAssignment, View};
use xmreid_core::eval::{EvalError, GalleryMode, Metric, PipelineConfig, SplitReport};
use xmreid_core::features::Standardizer;
use xmreid_core::linalg::Matrix;
use xmreid_core::rng::{derive_seed, CounterRng};
use xmreid_core::synth::{gen_paired, gen_splits, SynthError};
use xmreid_core::textcnn::{find_detector_channel, init_model, train, CnnError, SolverConfig, TextCnnConfig};
use xmreid_core::textprep::{
    augment_corpus, augment_gaussian, to_tensor, AugmentMethod, Description, DescriptionTensor, EmbeddingTable,
    TextError, GAUSSIAN_SIGMA, SYNONYM_REPLACE_PROB,
};
use xmreid_core::xqda::{fit_xqda, XqdaConfig, XqdaError};

use crate::config::{self, ConfigError};
use crate::dataio::{self, AttributeTable, DataError, FeatRecord};
use crate::models;
use crate::report::{report_csv, report_table, split_summary, RunManifest};
use crate::runner::{evaluate_parallel, run_splits};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Data(_) => 4,
            CliError::Numerical(_) => 5,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<TextError> for CliError {
    fn from(e: TextError) -> Self {
        match e {
            TextError::UnknownMethod(_) | TextError::ZeroFactor => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CnnError> for CliError {
    fn from(e: CnnError) -> Self {
        match e {
            CnnError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CcaError> for CliError {
    fn from(e: CcaError) -> Self {
        match e {
            CcaError::Linalg(_) => CliError::Numerical(e.to_string()),
            CcaError::KOutOfRange { .. } | CcaError::MissingModel(_) | CcaError::UnknownScenario(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<XqdaError> for CliError {
    fn from(e: XqdaError) -> Self {
        match e {
            XqdaError::Linalg(_) | XqdaError::DegenerateMetric => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Cca(c) => c.into(),
            EvalError::Xqda(x) => x.into(),
            EvalError::NOutOfRange { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "xmreid", version, about = "Cross-modal person re-identification experiments")]
struct Cli {
    /// Master seed for every random choice.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads for split evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Suppress console tables and summaries.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic paired-modality dataset.
    GenSynth(GenSynthArgs),
    /// Fit CCA between vision and language features.
    FitCca(FitCcaArgs),
    /// Fit an XQDA metric on cross-view features.
    FitXqda(FitXqdaArgs),
    /// Train the text CNN on a description corpus.
    TrainTextcnn(TrainArgs),
    /// Extract FC2-input features for every description.
    TextFeatures(TextFeaturesArgs),
    /// Find the convolution channel that localizes a concept.
    FindDetector(DetectorArgs),
    /// Write an augmented description corpus.
    Augment(AugmentArgs),
    /// Evaluate one gallery x query scenario over splits.
    Evaluate(EvaluateArgs),
    /// Vision + attribute evaluation with N flipped bits per view.
    AttrSweep(SweepArgs),
}

#[derive(Debug, Args, Serialize)]
struct GenSynthArgs {
    /// TOML file with a preset and overrides; the scenario preset otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Existing output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SplitSelection {
    /// Restrict fitting to the training identities of one split.
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    split_index: usize,
}

#[derive(Debug, Args, Serialize)]
struct FitCcaArgs {
    #[arg(long)]
    vision: PathBuf,
    #[arg(long)]
    language: PathBuf,
    #[command(flatten)]
    selection: SplitSelection,
    /// Canonical pairs kept; min(d_x, d_y, 128) by default.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = xmreid_core::cca::DEFAULT_EPS)]
    eps: f64,
    /// Standardize both views with training statistics first.
    #[arg(long)]
    zscore: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct FitXqdaArgs {
    #[arg(long)]
    features: PathBuf,
    #[command(flatten)]
    selection: SplitSelection,
    #[arg(long, default_value_t = xmreid_core::xqda::DEFAULT_EPS)]
    eps: f64,
    #[arg(long, default_value_t = xmreid_core::xqda::DEFAULT_MAX_RANK)]
    max_rank: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum TrainAugment {
    Drop,
    Synonym,
    Gaussian,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum TokenAugment {
    Drop,
    Synonym,
}

#[derive(Debug, Args, Serialize)]
struct TextInputs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    inputs: TextInputs,
    #[arg(long, value_enum)]
    augment: Option<TrainAugment>,
    /// Copies per description including the original.
    #[arg(long, default_value_t = 1)]
    factor: usize,
    #[arg(long)]
    synonyms: Option<PathBuf>,
    #[arg(long, default_value_t = xmreid_core::textprep::DEFAULT_MAX_LEN)]
    max_len: usize,
    #[arg(long, default_value_t = 256)]
    channels: usize,
    #[arg(long, default_value_t = 5)]
    width: usize,
    #[arg(long, default_value_t = 1024)]
    hidden: usize,
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 0.0005)]
    weight_decay: f64,
    #[arg(long, default_value_t = 50_000)]
    step: usize,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration mini-batch loss as `iteration,loss`.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct TextFeaturesArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    inputs: TextInputs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct DetectorArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    inputs: TextInputs,
    /// Comma-separated tokens that all express the concept.
    #[arg(long, value_delimiter = ',', required = true)]
    concept: Vec<String>,
    /// Optional CSV with the per-description detected positions.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AugmentArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    method: TokenAugment,
    #[arg(long)]
    factor: usize,
    #[arg(long)]
    synonyms: Option<PathBuf>,
    #[arg(long, default_value_t = SYNONYM_REPLACE_PROB)]
    p_replace: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MetricArg {
    Xqda,
    Euclidean,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum GalleryArg {
    Single,
    Multi,
}

#[derive(Debug, Args, Serialize)]
struct PipelineArgs {
    #[arg(long)]
    splits: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = xmreid_core::cca::DEFAULT_EPS)]
    cca_eps: f64,
    #[arg(long)]
    cca_zscore: bool,
    #[arg(long, default_value_t = xmreid_core::xqda::DEFAULT_EPS)]
    xqda_eps: f64,
    #[arg(long, default_value_t = xmreid_core::xqda::DEFAULT_MAX_RANK)]
    max_rank: usize,
    #[arg(long)]
    xqda_zscore: bool,
    #[arg(long, value_enum, default_value_t = MetricArg::Xqda)]
    metric: MetricArg,
    #[arg(long, value_enum, default_value_t = GalleryArg::Single)]
    gallery: GalleryArg,
    /// Existing output directory for the CSV report and manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    vision: Option<PathBuf>,
    #[arg(long)]
    language: Option<PathBuf>,
    #[arg(long)]
    attributes: Option<PathBuf>,
    /// Fixed CCA model for VxL and VxVL.
    #[arg(long, conflicts_with = "fit_cca")]
    cca: Option<PathBuf>,
    /// Fit CCA on each split's training identities instead.
    #[arg(long)]
    fit_cca: bool,
    /// Attribute bits flipped per identity and view.
    #[arg(long, default_value_t = 0)]
    flips: usize,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    vision: PathBuf,
    #[arg(long)]
    attributes: PathBuf,
    /// Flip counts to evaluate.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    n: Vec<usize>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Ctx<'a> {
    seed: u64,
    threads: usize,
    quiet: bool,
    started: Instant,
    started_unix_ms: u128,
    name: &'a str,
}

impl Ctx<'_> {
    fn say(&self, text: &str) {
        if !self.quiet {
            print!("{text}");
        }
    }

    fn manifest<T: Serialize>(&self, args: &T) -> RunManifest {
        RunManifest::new(self.name, self.seed, self.threads, args)
    }

    fn finish(&self, mut m: RunManifest, path: &Path) -> Result<(), CliError> {
        m.started_unix_ms = self.started_unix_ms;
        m.duration_ms = self.started.elapsed().as_millis();
        dataio::write_text(path, &m.to_json())?;
        Ok(())
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let name = match &cli.command {
        Command::GenSynth(_) => "gen-synth",
        Command::FitCca(_) => "fit-cca",
        Command::FitXqda(_) => "fit-xqda",
        Command::TrainTextcnn(_) => "train-textcnn",
        Command::TextFeatures(_) => "text-features",
        Command::FindDetector(_) => "find-detector",
        Command::Augment(_) => "augment",
        Command::Evaluate(_) => "evaluate",
        Command::AttrSweep(_) => "attr-sweep",
    };
    if cli.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let ctx = Ctx {
        seed: cli.seed,
        threads: cli.threads,
        quiet: cli.quiet,
        started: Instant::now(),
        started_unix_ms: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis()),
        name,
    };
    match &cli.command {
        Command::GenSynth(a) => gen_synth(&ctx, a),
        Command::FitCca(a) => fit_cca_cmd(&ctx, a),
        Command::FitXqda(a) => fit_xqda_cmd(&ctx, a),
        Command::TrainTextcnn(a) => train_cmd(&ctx, a),
        Command::TextFeatures(a) => text_features(&ctx, a),
        Command::FindDetector(a) => find_detector(&ctx, a),
        Command::Augment(a) => augment(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::AttrSweep(a) => attr_sweep(&ctx, a),
    }
}

fn require_dir(dir: &Path) -> Result<(), CliError> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::Io(format!("{}: output directory does not exist", dir.display())))
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn gen_synth(ctx: &Ctx, a: &GenSynthArgs) -> Result<(), CliError> {
    let text = a.config.as_deref().map(dataio::read_text).transpose()?;
    let cfg = config::resolve(text.as_deref(), ctx.seed)?;
    require_dir(&a.out)?;
    let ds = gen_paired(&cfg)?;
    let splits = gen_splits(&cfg);
    let feat = |f: fn(&xmreid_core::dataset::Sample) -> &Option<Vec<f64>>| -> Vec<FeatRecord> {
        ds.samples()
            .iter()
            .map(|s| FeatRecord { identity: s.identity.clone(), view: s.view, values: f(s).clone().unwrap_or_default() })
            .collect()
    };
    let attrs = AttributeTable {
        bits: cfg.attribute_bits,
        rows: ds.samples().iter().filter_map(|s| Some((s.identity.clone(), s.attributes.clone()?))).collect(),
    };
    let files = [
        ("vision.feat", dataio::write_feat(&feat(|s| &s.vision))),
        ("language.feat", dataio::write_feat(&feat(|s| &s.language))),
        ("attributes.attr", dataio::write_attributes(&attrs)),
        ("splits.split", dataio::write_splits(&splits)),
        ("config.toml", config::to_toml(&cfg)?),
    ];
    let mut m = ctx.manifest(&config::SynthSettings::from(&cfg));
    if let Some(p) = &a.config {
        m.add_input(p)?;
    }
    for (name, body) in &files {
        let path = a.out.join(name);
        dataio::write_text(&path, body)?;
        m.add_output(&path)?;
    }
    ctx.say(&format!(
        "generated {} samples of {} identities, {} splits, in {}\n",
        ds.len(),
        cfg.identities,
        splits.len(),
        a.out.display()
    ));
    ctx.finish(m, &a.out.join("manifest.json"))
}

fn selected_identities(sel: &SplitSelection, ds: &Dataset) -> Result<Option<SplitAssignment>, CliError> {
    let Some(path) = &sel.splits else { return Ok(None) };
    let mut splits = dataio::load_splits(path)?;
    dataio::check_splits(ds, &splits)?;
    if sel.split_index >= splits.len() {
        return Err(CliError::Usage(format!("split index {} outside 0..{}", sel.split_index, splits.len())));
    }
    Ok(Some(splits.swap_remove(sel.split_index)))
}

fn fit_cca_cmd(ctx: &Ctx, a: &FitCcaArgs) -> Result<(), CliError> {
    let v = dataio::load_feat(&a.vision)?;
    let l = dataio::load_feat(&a.language)?;
    let ds = dataio::assemble_dataset(Some(&v), Some(&l), None)?;
    let split = selected_identities(&a.selection, &ds)?;
    let train: Vec<_> =
        ds.samples().iter().filter(|s| split.as_ref().is_none_or(|sp| sp.is_train(&s.identity))).collect();
    let xs: Vec<&[f64]> = train.iter().map(|s| s.vision.as_deref().unwrap_or_default()).collect();
    let ys: Vec<&[f64]> = train.iter().map(|s| s.language.as_deref().unwrap_or_default()).collect();
    if xs.is_empty() {
        return Err(CliError::Data("no training samples".into()));
    }
    let k = a.k.unwrap_or_else(|| xs[0].len().min(ys[0].len()).min(xmreid_core::cca::DEFAULT_RANK_BUDGET));
    let to_matrix = |rows: &[Vec<f64>]| Matrix::from_rows(rows).map_err(|e| CliError::Data(e.to_string()));
    let model = if a.zscore {
        let sx = Standardizer::fit(&xs);
        let sy = Standardizer::fit(&ys);
        let zx: Vec<Vec<f64>> = xs.iter().map(|r| sx.apply(r)).collect();
        let zy: Vec<Vec<f64>> = ys.iter().map(|r| sy.apply(r)).collect();
        fit_cca(&to_matrix(&zx)?, &to_matrix(&zy)?, k, a.eps)?.compose_input_scaling(&sx, &sy)
    } else {
        let xr: Vec<Vec<f64>> = xs.iter().map(|r| r.to_vec()).collect();
        let yr: Vec<Vec<f64>> = ys.iter().map(|r| r.to_vec()).collect();
        fit_cca(&to_matrix(&xr)?, &to_matrix(&yr)?, k, a.eps)?
    };
    models::save(&a.out, &models::write_cca(&model))?;
    let mut m = ctx.manifest(a);
    m.add_input(&a.vision)?;
    m.add_input(&a.language)?;
    if let Some(p) = &a.selection.splits {
        m.add_input(p)?;
    }
    m.add_output(&a.out)?;
    m.results = serde_json::json!({ "k": model.k(), "correlations": model.correlations });
    let rho: Vec<String> = model.correlations.iter().map(|r| format!("{r:.4}")).collect();
    ctx.say(&format!("k = {} canonical correlations: {}\n", model.k(), rho.join(" ")));
    ctx.finish(m, &manifest_path(&a.out))
}

fn fit_xqda_cmd(ctx: &Ctx, a: &FitXqdaArgs) -> Result<(), CliError> {
    let recs = dataio::load_feat(&a.features)?;
    let ds = dataio::assemble_dataset(Some(&recs), None, None)?;
    let split = selected_identities(&a.selection, &ds)?;
    let train: Vec<_> =
        ds.samples().iter().filter(|s| split.as_ref().is_none_or(|sp| sp.is_train(&s.identity))).collect();
    let rows: Vec<Vec<f64>> = train.iter().map(|s| s.vision.clone().unwrap_or_default()).collect();
    let x = Matrix::from_rows(&rows).map_err(|e| CliError::Data(e.to_string()))?;
    let ids: Vec<&str> = train.iter().map(|s| s.identity.as_str()).collect();
    let views: Vec<View> = train.iter().map(|s| s.view).collect();
    let model = fit_xqda(&x, &ids, &views, &XqdaConfig { eps: a.eps, max_rank: a.max_rank })?;
    models::save(&a.out, &models::write_xqda(&model))?;
    let mut m = ctx.manifest(a);
    m.add_input(&a.features)?;
    if let Some(p) = &a.selection.splits {
        m.add_input(p)?;
    }
    m.add_output(&a.out)?;
    m.results = serde_json::json!({ "rank": model.rank(), "eigenvalues": model.eigenvalues, "fallback": model.fallback });
    ctx.say(&format!(
        "subspace rank {}{}; leading eigenvalue {:.4}\n",
        model.rank(),
        if model.fallback { " (fallback: no eigenvalue above 1)" } else { "" },
        model.eigenvalues[0]
    ));
    ctx.finish(m, &manifest_path(&a.out))
}

fn load_text_inputs(inputs: &TextInputs) -> Result<(Vec<Description>, EmbeddingTable), CliError> {
    let corpus = dataio::load_corpus(&inputs.corpus)?;
    let table = dataio::load_embeddings(&inputs.embeddings)?;
    Ok((corpus.iter().map(|r| r.description()).collect(), table))
}

const AUGMENT_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 3;

fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> Result<(), CliError> {
    let (corpus, table) = load_text_inputs(&a.inputs)?;
    if corpus.is_empty() {
        return Err(CliError::Data("corpus is empty".into()));
    }
    let labels: BTreeMap<&str, usize> = {
        let mut ids: Vec<&str> = corpus.iter().map(|d| d.identity.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect()
    };
    let mut aug_rng = CounterRng::new(derive_seed(ctx.seed, AUGMENT_STREAM));
    let method = match a.augment {
        Some(TrainAugment::Drop) => Some(AugmentMethod::Drop),
        Some(TrainAugment::Synonym) => Some(AugmentMethod::Synonym { map: load_synonym_map(a.synonyms.as_deref())?, p_replace: SYNONYM_REPLACE_PROB }),
        _ => None,
    };
    let descriptions = match &method {
        Some(m) => augment_corpus(&corpus, m, a.factor, &mut aug_rng)?,
        None => corpus.clone(),
    };
    let mut data: Vec<(DescriptionTensor, usize)> = Vec::with_capacity(descriptions.len() * a.factor.max(1));
    for d in &descriptions {
        let x = to_tensor(&d.tokens, &table, a.max_len);
        let y = labels[d.identity.as_str()];
        if matches!(a.augment, Some(TrainAugment::Gaussian)) {
            if a.factor == 0 {
                return Err(TextError::ZeroFactor.into());
            }
            for _ in 1..a.factor {
                data.push((augment_gaussian(&x, GAUSSIAN_SIGMA, &mut aug_rng), y));
            }
        }
        data.push((x, y));
    }
    let cfg = TextCnnConfig {
        embedding_dim: table.dim(),
        max_len: a.max_len,
        channels: a.channels,
        width: a.width,
        hidden: a.hidden,
        classes: labels.len(),
        dropout: a.dropout,
    };
    let mut model = init_model(cfg, &mut CounterRng::new(derive_seed(ctx.seed, INIT_STREAM)))?;
    let solver = SolverConfig {
        base_lr: a.lr,
        momentum: a.momentum,
        weight_decay: a.weight_decay,
        batch_size: a.batch,
        step_size: a.step,
        gamma: a.gamma,
        iterations: a.iters,
    };
    let report = train(&mut model, &data, &solver, &mut CounterRng::new(derive_seed(ctx.seed, TRAIN_STREAM)))?;
    if report.loss_history.iter().any(|l| !l.is_finite()) {
        return Err(CliError::Numerical("training loss diverged".into()));
    }
    let originals: Vec<(DescriptionTensor, usize)> = corpus
        .iter()
        .map(|d| (to_tensor(&d.tokens, &table, a.max_len), labels[d.identity.as_str()]))
        .collect();
    let accuracy = model.accuracy(&originals)?;
    models::save(&a.out, &models::write_cnn(&model))?;
    let mut m = ctx.manifest(a);
    m.add_input(&a.inputs.corpus)?;
    m.add_input(&a.inputs.embeddings)?;
    if let Some(p) = &a.synonyms {
        m.add_input(p)?;
    }
    m.add_output(&a.out)?;
    if let Some(path) = &a.loss_csv {
        let mut s = String::from("iteration,loss\n");
        for (i, l) in report.loss_history.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, dataio::fmt_real(*l)));
        }
        dataio::write_text(path, &s)?;
        m.add_output(path)?;
    }
    let final_loss = report.loss_history.last().copied().unwrap_or(f64::NAN);
    m.results = serde_json::json!({
        "classes": labels.len(),
        "training_examples": data.len(),
        "final_loss": final_loss,
        "train_accuracy": accuracy,
    });
    ctx.say(&format!(
        "trained on {} examples of {} classes for {} iterations; final loss {:.4}; final train accuracy {:.4}\n",
        data.len(),
        labels.len(),
        a.iters,
        final_loss,
        accuracy
    ));
    ctx.finish(m, &manifest_path(&a.out))
}

fn load_synonym_map(path: Option<&Path>) -> Result<xmreid_core::textprep::SynonymMap, CliError> {
    let path = path.ok_or_else(|| CliError::Usage("synonym augmentation needs --synonyms".into()))?;
    Ok(dataio::load_synonyms(path)?)
}

fn text_features(ctx: &Ctx, a: &TextFeaturesArgs) -> Result<(), CliError> {
    let model = models::load_cnn(&a.model)?;
    let (corpus, table) = load_text_inputs(&a.inputs)?;
    let recs = corpus
        .iter()
        .map(|d| {
            let x = to_tensor(&d.tokens, &table, model.config.max_len);
            Ok(FeatRecord { identity: d.identity.clone(), view: d.view, values: model.extract_features(&x)? })
        })
        .collect::<Result<Vec<_>, CnnError>>()?;
    dataio::write_text(&a.out, &dataio::write_feat(&recs))?;
    let mut m = ctx.manifest(a);
    m.add_input(&a.model)?;
    m.add_input(&a.inputs.corpus)?;
    m.add_input(&a.inputs.embeddings)?;
    m.add_output(&a.out)?;
    ctx.say(&format!("wrote {} feature vectors of dimension {}\n", recs.len(), model.config.hidden));
    ctx.finish(m, &manifest_path(&a.out))
}

fn find_detector(ctx: &Ctx, a: &DetectorArgs) -> Result<(), CliError> {
    let model = models::load_cnn(&a.model)?;
    let (corpus, table) = load_text_inputs(&a.inputs)?;
    let concept: Vec<String> = a.concept.iter().map(|c| c.to_lowercase()).collect();
    let subset: Vec<(DescriptionTensor, usize)> = corpus
        .iter()
        .filter_map(|d| {
            let kept: Vec<&String> =
                d.tokens.iter().filter(|t| table.get(t).is_some()).take(model.config.max_len).collect();
            let v = kept.iter().position(|t| concept.contains(t))? + 1;
            Some((to_tensor(&d.tokens, &table, model.config.max_len), v))
        })
        .collect();
    let r = find_detector_channel(&model, &subset)?;
    let mean = r.total_error as f64 / subset.len() as f64;
    let mut m = ctx.manifest(a);
    m.add_input(&a.model)?;
    m.add_input(&a.inputs.corpus)?;
    m.add_input(&a.inputs.embeddings)?;
    m.results = serde_json::json!({
        "channel": r.channel,
        "total_error": r.total_error,
        "descriptions": subset.len(),
        "mean_error": mean,
    });
    ctx.say(&format!(
        "detector channel {} over {} descriptions: total error {}, mean {:.3} words\n",
        r.channel,
        subset.len(),
        r.total_error,
        mean
    ));
    let Some(out) = &a.out else { return Ok(()) };
    let mut s = String::from("description,detected,truth,error\n");
    for (i, ((pos, err), (_, v))) in r.positions.iter().zip(&r.errors).zip(&subset).enumerate() {
        s.push_str(&format!("{},{pos},{v},{err}\n", i + 1));
    }
    dataio::write_text(out, &s)?;
    m.add_output(out)?;
    ctx.finish(m, &manifest_path(out))
}

fn augment(ctx: &Ctx, a: &AugmentArgs) -> Result<(), CliError> {
    let records = dataio::load_corpus(&a.corpus)?;
    let corpus: Vec<Description> = records.iter().map(|r| r.description()).collect();
    let method = match a.method {
        TokenAugment::Drop => AugmentMethod::Drop,
        TokenAugment::Synonym => {
            AugmentMethod::Synonym { map: load_synonym_map(a.synonyms.as_deref())?, p_replace: a.p_replace }
        }
    };
    let mut rng = CounterRng::new(derive_seed(ctx.seed, AUGMENT_STREAM));
    let out = augment_corpus(&corpus, &method, a.factor, &mut rng)?;
    dataio::write_text(&a.out, &dataio::write_corpus(&dataio::descriptions_to_records(&out)))?;
    let mut m = ctx.manifest(a);
    m.add_input(&a.corpus)?;
    if let Some(p) = &a.synonyms {
        m.add_input(p)?;
    }
    m.add_output(&a.out)?;
    m.results = serde_json::json!({ "records": out.len() });
    ctx.say(&format!("wrote {} descriptions ({} x {})\n", out.len(), corpus.len(), a.factor));
    ctx.finish(m, &manifest_path(&a.out))
}

fn pipeline_config(p: &PipelineArgs) -> PipelineConfig {
    PipelineConfig {
        cca_k: p.k,
        cca_eps: p.cca_eps,
        cca_zscore: p.cca_zscore,
        xqda: XqdaConfig { eps: p.xqda_eps, max_rank: p.max_rank },
        xqda_zscore: p.xqda_zscore,
        metric: match p.metric {
            MetricArg::Xqda => Metric::Xqda,
            MetricArg::Euclidean => Metric::Euclidean,
        },
        gallery: match p.gallery {
            GalleryArg::Single => GalleryMode::SingleShot,
            GalleryArg::Multi => GalleryMode::MultiShot,
        },
        attribute_flips: 0,
        cca_model: None,
    }
}

fn load_optional_feat(path: Option<&Path>) -> Result<Option<Vec<FeatRecord>>, CliError> {
    Ok(path.map(dataio::load_feat).transpose()?)
}

fn split_results(report: &SplitReport) -> serde_json::Value {
    let per_split: Vec<serde_json::Value> = split_summary(report)
        .into_iter()
        .enumerate()
        .map(|(i, [r1, r5, r10])| serde_json::json!({ "split": i, "r1": r1, "r5": r5, "r10": r10 }))
        .collect();
    serde_json::json!({
        "label": report.label,
        "mean_r1": 100.0 * report.mean_at(1),
        "mean_r5": 100.0 * report.mean_at(5),
        "mean_r10": 100.0 * report.mean_at(10),
        "splits": per_split,
    })
}

fn evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Result<(), CliError> {
    let scenario: Scenario = a.scenario.parse().map_err(|e: CcaError| CliError::Usage(e.to_string()))?;
    if scenario.needs_cca() && a.cca.is_none() && !a.fit_cca {
        return Err(CliError::Usage(format!(
            "scenario {scenario} needs a CCA model: pass --cca <model> or --fit-cca"
        )));
    }
    require_dir(&a.pipeline.out)?;
    let vision = load_optional_feat(a.vision.as_deref())?;
    let language = load_optional_feat(a.language.as_deref())?;
    let attributes = a.attributes.as_deref().map(dataio::load_attributes).transpose()?;
    if vision.is_none() && language.is_none() {
        return Err(CliError::Usage("pass --vision and/or --language".into()));
    }
    let ds = dataio::assemble_dataset(vision.as_deref(), language.as_deref(), attributes.as_ref())?;
    let splits = dataio::load_splits(&a.pipeline.splits)?;
    dataio::check_splits(&ds, &splits)?;
    let mut cfg = pipeline_config(&a.pipeline);
    cfg.attribute_flips = a.flips;
    if let Some(p) = &a.cca {
        cfg.cca_model = Some(models::load_cca(p)?);
    }
    let report = evaluate_parallel(&ds, &splits, scenario, &cfg, ctx.seed, ctx.threads)?;

    let csv = a.pipeline.out.join(format!("{}.csv", scenario.name()));
    dataio::write_text(&csv, &report_csv(&report))?;
    let mut m = ctx.manifest(a);
    for p in [&a.vision, &a.language, &a.attributes, &a.cca].into_iter().flatten() {
        m.add_input(p)?;
    }
    m.add_input(&a.pipeline.splits)?;
    m.add_output(&csv)?;
    m.results = split_results(&report);
    ctx.say(&report_table(&[&report]));
    ctx.finish(m, &a.pipeline.out.join("manifest.json"))
}

fn attr_sweep(ctx: &Ctx, a: &SweepArgs) -> Result<(), CliError> {
    require_dir(&a.pipeline.out)?;
    let vision = dataio::load_feat(&a.vision)?;
    let attributes = dataio::load_attributes(&a.attributes)?;
    let ds = dataio::assemble_dataset(Some(&vision), None, Some(&attributes))?;
    let splits = dataio::load_splits(&a.pipeline.splits)?;
    dataio::check_splits(&ds, &splits)?;
    let base = pipeline_config(&a.pipeline);
    let reports = run_splits(a.n.len(), 1, |i| {
        let cfg = PipelineConfig { attribute_flips: a.n[i], ..base.clone() };
        evaluate_parallel(&ds, &splits, Scenario::VAxVA, &cfg, ctx.seed, ctx.threads).map(|mut r| {
            r.label = format!("VAxVA N={}", a.n[i]);
            r
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let mut m = ctx.manifest(a);
    m.add_input(&a.vision)?;
    m.add_input(&a.attributes)?;
    m.add_input(&a.pipeline.splits)?;
    let mut results = Vec::new();
    for (n, r) in a.n.iter().zip(&reports) {
        let csv = a.pipeline.out.join(format!("VAxVA_N{n}.csv"));
        dataio::write_text(&csv, &report_csv(r))?;
        m.add_output(&csv)?;
        results.push(split_results(r));
    }
    m.results = serde_json::Value::Array(results);
    ctx.say(&report_table(&reports.iter().collect::<Vec<_>>()));
    ctx.finish(m, &a.pipeline.out.join("manifest.json"))
}
