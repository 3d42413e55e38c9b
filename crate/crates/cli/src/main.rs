//! Command-line front end over harvesting, scanning, selection, training,
//! and analysis. Each subcommand maps input artifacts to output artifacts.
//! JSON reports embed a provenance record (resolved settings plus SHA-256
//! digests of every input); binary and line-oriented outputs get the same
//! record as a `.meta.json` sidecar.
//!
//! Exit codes: 0 success, 1 validation or runtime error, 2 scan completed
//! but some corpus rows failed to read.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hayama_core::analysis::{
    correlation_matrix, occurrence_ecdf, per_feature_stats, per_feature_stats_rows,
    pls_max_correlation, ClassFilter, CorrelationMatrix, EvalReport, FeatureStats, ProbScorer,
    RocCurve,
};
use hayama_core::boosting::{
    combined_frame, fit_gbdt, fit_linear_unpenalized, load_gbdt, load_linear, predict_proba,
    save_gbdt, save_linear, side_frame, yara_frame, BoostedEnsemble, FeatureFrame, FeatureSpace,
    LinearModel, TrainConfig, GBDT_FORMAT,
};
use hayama_core::dataset::{
    align, load_manifest, load_side_features, CorpusManifest, SampleRecord, Split,
};
use hayama_core::harvest::{harvest, load_catalog, save_catalog};
use hayama_core::pipeline::{run_pipeline, Learner, PipelineConfig};
use hayama_core::scanner::{
    compile, load_matrix, save_matrix, scan_corpus, sidecar_path, OccurrenceMatrix, ScanOptions,
    DEFAULT_CHUNK_SIZE,
};
use hayama_core::selection::{
    independent_design, lambda_path, load_selection_model, prepare_conditional, prepare_stacked,
    save_selection_model, select_top_k, SelectionMode,
};
use hayama_core::synth::{generate_synthetic, SyntheticSpec};
use hayama_core::{Error, Execution};

#[derive(Parser)]
#[command(
    name = "hayama",
    version,
    about = "Harvest sub-signatures from rule files, scan a corpus into an \
             occurrence matrix, select features, train and evaluate models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args, Clone)]
struct Global {
    /// Master random seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving default-named outputs.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Overwrite outputs that already exist.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads for the parallel stages; 0 uses the default pool, 1
    /// runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML file mirroring the pipeline configuration keys; command-line
    /// flags override values from the file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse rule files into a canonical sub-signature catalog.
    Harvest(HarvestArgs),
    /// Scan the corpus in a manifest against a catalog into a sparse
    /// occurrence matrix.
    Scan(ScanArgs),
    /// Select sub-signatures with an L1-regularized logistic path.
    Select(SelectArgs),
    /// Train a final learner on selected sub-signatures and side features.
    Train(TrainArgs),
    /// Score a saved model on a split and write an evaluation report.
    Eval(EvalArgs),
    /// Per-feature statistics, occurrence distributions, correlations.
    Analyze(AnalyzeArgs),
    /// Run harvest, scan, select, train, and eval end to end.
    Pipeline(PipelineArgs),
    /// Generate a labeled synthetic corpus with planted patterns.
    Synth(SynthArgs),
}

#[derive(Args)]
struct HarvestArgs {
    /// Rule directories or files to walk; repeatable.
    #[arg(long = "rules", num_args = 1..)]
    rules: Vec<PathBuf>,
    /// Catalog output path (default: <workdir>/catalog.jsonl).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    /// Catalog produced by `harvest`.
    #[arg(long)]
    catalog: PathBuf,
    /// Corpus manifest (key,path,label,split).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Matrix output path (default: <workdir>/matrix.hym).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-row scan report path (default: <workdir>/scan_report.jsonl).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Streaming chunk size in bytes for large files.
    #[arg(long = "chunk-size")]
    chunk_size: Option<usize>,
}

#[derive(Args)]
struct SelectArgs {
    /// Occurrence matrix produced by `scan`.
    #[arg(long)]
    matrix: PathBuf,
    /// Manifest restricting selection to its TRAIN rows; without it every
    /// matrix row is treated as training data.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Design mode: independent, conditional, or stacked.
    #[arg(long)]
    mode: Option<String>,
    /// Feature budgets; repeatable or comma-separated.
    #[arg(long = "k", value_delimiter = ',')]
    k: Vec<usize>,
    /// Side-feature CSV keyed like the manifest.
    #[arg(long)]
    side: Option<PathBuf>,
    /// Saved baseline model for the conditional design; one is trained from
    /// the side features when absent.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Learner for a freshly trained baseline: gbdt or linear.
    #[arg(long)]
    learner: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// Occurrence matrix produced by `scan`.
    #[arg(long)]
    matrix: PathBuf,
    /// Manifest restricting training to its TRAIN rows; without it every
    /// matrix row is used.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Selection file from `select`; omit to train on side features alone.
    #[arg(long)]
    selection: Option<PathBuf>,
    /// Side-feature CSV keyed like the manifest.
    #[arg(long)]
    side: Option<PathBuf>,
    /// Keep only the strongest k features from the selection file.
    #[arg(long)]
    k: Option<usize>,
    /// gbdt or linear.
    #[arg(long)]
    learner: Option<String>,
    /// Model output path (default: <workdir>/model.json).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Boosting rounds.
    #[arg(long)]
    trees: Option<usize>,
    /// Tree depth limit.
    #[arg(long)]
    depth: Option<usize>,
    /// Shrinkage per boosting round.
    #[arg(long = "learning-rate")]
    learning_rate: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Saved model from `train` (or a pipeline models directory).
    #[arg(long)]
    model: PathBuf,
    /// Occurrence matrix covering the rows to score.
    #[arg(long)]
    matrix: PathBuf,
    /// Manifest naming the splits; without it every row is scored.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Side-feature CSV; required when the model consumes side columns.
    #[arg(long)]
    side: Option<PathBuf>,
    /// train, test, or valid (default: test).
    #[arg(long)]
    split: Option<String>,
    /// Report output path (default: <workdir>/eval_report.json).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional fpr,tpr curve dump.
    #[arg(long = "roc-out")]
    roc_out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(subcommand)]
    what: AnalyzeCmd,
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Hit counts and accuracy/precision/recall per sub-signature column.
    Stats(StatsArgs),
    /// Per-class cumulative distribution of feature fire counts.
    Ecdf(EcdfArgs),
    /// Pairwise correlations between selected columns and side features.
    Corr(CorrArgs),
    /// First-component score correlation between the two feature blocks.
    Pls(CorrArgs),
}

#[derive(Args)]
struct StatsArgs {
    /// Labeled occurrence matrix.
    #[arg(long)]
    matrix: PathBuf,
    /// Manifest restricting the statistics to its TRAIN rows.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Report output path (default: <workdir>/feature_stats.json).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EcdfArgs {
    /// Labeled occurrence matrix.
    #[arg(long)]
    matrix: PathBuf,
    /// malware or benign; both when omitted.
    #[arg(long)]
    class: Option<String>,
    /// Report output path (default: <workdir>/ecdf.json).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CorrArgs {
    /// Labeled occurrence matrix.
    #[arg(long)]
    matrix: PathBuf,
    /// Selection file naming the sub-signature block.
    #[arg(long)]
    selection: PathBuf,
    /// Side-feature CSV forming the second block.
    #[arg(long)]
    side: PathBuf,
    /// Manifest restricting rows to its TRAIN split.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Keep only the strongest k features from the selection file.
    #[arg(long)]
    k: Option<usize>,
    /// Report output path (default: <workdir>/correlations.json or pls.json).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Directory of rule files to harvest.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Corpus manifest (key,path,label,split).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Side-feature CSV keyed like the manifest.
    #[arg(long)]
    side: Option<PathBuf>,
    /// Design mode: independent, conditional, or stacked.
    #[arg(long)]
    mode: Option<String>,
    /// Feature budgets; repeatable or comma-separated.
    #[arg(long = "k", value_delimiter = ',')]
    k: Vec<usize>,
    /// gbdt or linear.
    #[arg(long)]
    learner: Option<String>,
    /// Streaming chunk size in bytes for large files.
    #[arg(long = "chunk-size")]
    chunk_size: Option<usize>,
    /// Boosting rounds.
    #[arg(long)]
    trees: Option<usize>,
    /// Tree depth limit.
    #[arg(long)]
    depth: Option<usize>,
    /// Shrinkage per boosting round.
    #[arg(long = "learning-rate")]
    learning_rate: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory (default: <workdir>/synth).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Benign file count.
    #[arg(long)]
    benign: Option<usize>,
    /// Malware file count.
    #[arg(long)]
    malware: Option<usize>,
    /// Catalog pattern count.
    #[arg(long)]
    patterns: Option<usize>,
    /// Smallest generated file size in bytes.
    #[arg(long = "size-min")]
    size_min: Option<usize>,
    /// Largest generated file size in bytes.
    #[arg(long = "size-max")]
    size_max: Option<usize>,
    /// Probability a malware file receives each planted pattern.
    #[arg(long = "plant-rate-malware")]
    plant_rate_malware: Option<f64>,
    /// Probability a benign file receives each planted pattern.
    #[arg(long = "plant-rate-benign")]
    plant_rate_benign: Option<f64>,
    /// Label-correlated side feature columns.
    #[arg(long = "signal-side")]
    signal_side: Option<usize>,
    /// Pure-noise side feature columns.
    #[arg(long = "noise-side")]
    noise_side: Option<usize>,
}

/// Flat key-value config document; every key mirrors the pipeline
/// configuration and is optional, with command-line flags taking precedence.
#[derive(Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    rules_dir: Option<PathBuf>,
    manifest: Option<PathBuf>,
    side_features: Option<PathBuf>,
    workdir: Option<PathBuf>,
    mode: Option<SelectionMode>,
    target_k: Option<Vec<usize>>,
    learner: Option<Learner>,
    chunk_size: Option<usize>,
    workers: Option<usize>,
    seed: Option<u64>,
    train: Option<TrainTable>,
}

#[derive(Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainTable {
    n_trees: Option<usize>,
    max_depth: Option<usize>,
    learning_rate: Option<f64>,
    min_child_hessian: Option<f64>,
    l2_leaf: Option<f64>,
    n_bins: Option<usize>,
    seed: Option<u64>,
    row_subsample: Option<f64>,
    col_subsample: Option<f64>,
}

struct Ctx {
    global: Global,
    file: ConfigFile,
}

impl Ctx {
    fn load(global: Global) -> anyhow::Result<Self> {
        let file = match &global.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config file {}", p.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("parsing config file {}", p.display()))?
            }
            None => ConfigFile::default(),
        };
        Ok(Ctx { global, file })
    }

    fn workdir(&self) -> PathBuf {
        self.global
            .workdir
            .clone()
            .or_else(|| self.file.workdir.clone())
            .unwrap_or_else(|| PathBuf::from("."))
    }

    /// Resolves an output path: an explicit flag is used as given, the
    /// default lands in the workdir (created on demand).
    fn out_path(&self, explicit: &Option<PathBuf>, default_name: &str) -> anyhow::Result<PathBuf> {
        match explicit {
            Some(p) => Ok(p.clone()),
            None => {
                let dir = self.workdir();
                std::fs::create_dir_all(&dir)
                    .with_context(|| format!("creating workdir {}", dir.display()))?;
                Ok(dir.join(default_name))
            }
        }
    }

    fn guard(&self, path: &Path) -> anyhow::Result<()> {
        if path.exists() && !self.global.force {
            return Err(Error::OutputExists(path.to_path_buf()).into());
        }
        Ok(())
    }

    fn seed(&self, fallback: u64) -> u64 {
        self.global.seed.or(self.file.seed).unwrap_or(fallback)
    }

    fn workers(&self) -> usize {
        self.global.threads.or(self.file.workers).unwrap_or(0)
    }

    fn exec(&self) -> Execution {
        Execution::with_workers(self.workers())
    }

    fn chunk_size(&self, flag: Option<usize>) -> usize {
        flag.or(self.file.chunk_size).unwrap_or(DEFAULT_CHUNK_SIZE)
    }

    fn mode(&self, flag: &Option<String>) -> anyhow::Result<SelectionMode> {
        match flag {
            Some(s) => SelectionMode::from_token(s).ok_or_else(|| {
                Error::Validation(format!(
                    "unknown mode {s:?}; expected independent, conditional, or stacked"
                ))
                .into()
            }),
            None => Ok(self.file.mode.unwrap_or(SelectionMode::Conditional)),
        }
    }

    fn learner(&self, flag: &Option<String>) -> anyhow::Result<Learner> {
        match flag {
            Some(s) => Learner::from_token(s).ok_or_else(|| {
                Error::Validation(format!("unknown learner {s:?}; expected gbdt or linear"))
                    .into()
            }),
            None => Ok(self.file.learner.unwrap_or(Learner::Gbdt)),
        }
    }

    fn target_k(&self, flag: &[usize]) -> anyhow::Result<Vec<usize>> {
        let ks = if !flag.is_empty() {
            flag.to_vec()
        } else {
            self.file
                .target_k
                .clone()
                .unwrap_or_else(|| vec![10, 50, 100, 300])
        };
        if ks.is_empty() || ks.contains(&0) {
            return Err(
                Error::Validation("feature budgets must be positive integers".into()).into(),
            );
        }
        Ok(ks)
    }

    fn train_config(
        &self,
        trees: Option<usize>,
        depth: Option<usize>,
        learning_rate: Option<f64>,
    ) -> TrainConfig {
        let mut cfg = TrainConfig::default();
        if let Some(t) = &self.file.train {
            if let Some(v) = t.n_trees {
                cfg.n_trees = v;
            }
            if let Some(v) = t.max_depth {
                cfg.max_depth = v;
            }
            if let Some(v) = t.learning_rate {
                cfg.learning_rate = v;
            }
            if let Some(v) = t.min_child_hessian {
                cfg.min_child_hessian = v;
            }
            if let Some(v) = t.l2_leaf {
                cfg.l2_leaf = v;
            }
            if let Some(v) = t.n_bins {
                cfg.n_bins = v;
            }
            if let Some(v) = t.seed {
                cfg.seed = v;
            }
            if let Some(v) = t.row_subsample {
                cfg.row_subsample = v;
            }
            if let Some(v) = t.col_subsample {
                cfg.col_subsample = v;
            }
        }
        if let Some(v) = trees {
            cfg.n_trees = v;
        }
        if let Some(v) = depth {
            cfg.max_depth = v;
        }
        if let Some(v) = learning_rate {
            cfg.learning_rate = v;
        }
        cfg.seed = self.seed(cfg.seed);
        cfg
    }
}

// ---------------------------------------------------------------------------
// Provenance.

#[derive(Serialize)]
struct CommandMeta {
    command: String,
    seed: u64,
    workers: usize,
    settings: BTreeMap<String, String>,
    /// SHA-256 of each input artifact, keyed by its path.
    inputs: BTreeMap<String, String>,
}

impl CommandMeta {
    fn new(ctx: &Ctx, command: &str, default_seed: u64) -> Self {
        CommandMeta {
            command: command.to_string(),
            seed: ctx.seed(default_seed),
            workers: ctx.workers(),
            settings: BTreeMap::new(),
            inputs: BTreeMap::new(),
        }
    }

    fn setting(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.settings.insert(key.to_string(), value.to_string());
        self
    }

    fn input_file(&mut self, path: &Path) -> anyhow::Result<&mut Self> {
        self.inputs
            .insert(path.display().to_string(), file_digest(path)?);
        Ok(self)
    }

    fn input_tree(&mut self, path: &Path) -> anyhow::Result<&mut Self> {
        let digest = if path.is_dir() {
            tree_digest(path)?
        } else {
            file_digest(path)?
        };
        self.inputs.insert(path.display().to_string(), digest);
        Ok(self)
    }

    /// Writes this record next to `artifact` as `<artifact>.meta.json`.
    fn write_sidecar(&self, artifact: &Path) -> anyhow::Result<()> {
        let path = PathBuf::from(format!("{}.meta.json", artifact.display()));
        write_json_file(&path, self)
    }
}

fn file_digest(path: &Path) -> anyhow::Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("digesting {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digest over every file under a directory, keyed by relative path so
/// renames change the digest.
fn tree_digest(dir: &Path) -> anyhow::Result<String> {
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .collect();
    files.sort();
    let mut h = Sha256::new();
    for f in &files {
        let rel = f.strip_prefix(dir).unwrap_or(f);
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0u8]);
        h.update(std::fs::read(f).with_context(|| format!("digesting {}", f.display()))?);
        h.update([1u8]);
    }
    Ok(hex::encode(h.finalize()))
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Shared loading helpers.

/// Treats every matrix row as one split when no manifest was given.
fn manifest_from_matrix(matrix: &OccurrenceMatrix, split: Split) -> anyhow::Result<CorpusManifest> {
    let labels = matrix.labels.as_ref().ok_or(Error::MissingLabels)?;
    let records = matrix
        .row_ids
        .iter()
        .zip(labels)
        .map(|(key, &label)| SampleRecord {
            key: key.clone(),
            path: PathBuf::from(key),
            label,
            split,
        })
        .collect();
    Ok(CorpusManifest { records })
}

/// Positions of catalog ids inside the matrix column list.
fn matrix_positions(col_ids: &[u64], wanted: &[u64]) -> anyhow::Result<Vec<usize>> {
    wanted
        .iter()
        .map(|id| {
            col_ids.binary_search(id).map_err(|_| {
                Error::Validation(format!("selected id {id:016x} is not a matrix column"))
                    .into()
            })
        })
        .collect()
}

enum AnyModel {
    Gbdt(BoostedEnsemble),
    Linear(LinearModel),
}

impl AnyModel {
    fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading model {}", path.display()))?;
        let head: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing model {}", path.display()))?;
        match head.get("format").and_then(|f| f.as_str()) {
            Some(f) if f == GBDT_FORMAT => Ok(AnyModel::Gbdt(load_gbdt(path)?)),
            Some("hayama-linear") if head.get("kind").is_some() => {
                Ok(AnyModel::Linear(load_linear(path)?))
            }
            other => Err(Error::Validation(format!(
                "{} is not a trained model file (format {:?})",
                path.display(),
                other.unwrap_or("missing")
            ))
            .into()),
        }
    }

    fn feature_space(&self) -> &FeatureSpace {
        match self {
            AnyModel::Gbdt(m) => &m.feature_space,
            AnyModel::Linear(m) => &m.feature_space,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            AnyModel::Gbdt(_) => "gbdt",
            AnyModel::Linear(_) => "linear",
        }
    }
}

impl ProbScorer for AnyModel {
    fn proba(&self, frame: &FeatureFrame) -> hayama_core::Result<Vec<f64>> {
        match self {
            AnyModel::Gbdt(m) => predict_proba(m, frame),
            AnyModel::Linear(m) => m.predict_proba(frame),
        }
    }
}

fn write_roc_csv(path: &Path, curve: &RocCurve) -> anyhow::Result<()> {
    let mut out = String::from("fpr,tpr\n");
    for &(fpr, tpr) in &curve.points {
        out.push_str(&format!("{fpr},{tpr}\n"));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Commands.

fn cmd_harvest(ctx: &Ctx, args: HarvestArgs) -> anyhow::Result<u8> {
    let roots = if !args.rules.is_empty() {
        args.rules
    } else if let Some(r) = ctx.file.rules_dir.clone() {
        vec![r]
    } else {
        return Err(Error::Validation(
            "harvest needs --rules (or rules_dir in the config file)".into(),
        )
        .into());
    };
    for r in &roots {
        if !r.exists() {
            return Err(Error::Validation(format!("rule path {} not found", r.display())).into());
        }
    }
    let out = ctx.out_path(&args.out, "catalog.jsonl")?;
    ctx.guard(&out)?;

    let outcome = harvest(&roots, ctx.exec())?;
    save_catalog(&outcome.catalog, &out)?;
    for note in &outcome.diagnostics {
        eprintln!("note: {note}");
    }

    let mut meta = CommandMeta::new(ctx, "harvest", 0);
    meta.setting("out", out.display());
    for r in &roots {
        meta.input_tree(r)?;
    }
    meta.write_sidecar(&out)?;

    println!(
        "catalog {}: {} sub-signatures from {} rule root{}",
        out.display(),
        outcome.catalog.len(),
        roots.len(),
        if roots.len() == 1 { "" } else { "s" }
    );
    Ok(0)
}

fn cmd_scan(ctx: &Ctx, args: ScanArgs) -> anyhow::Result<u8> {
    let manifest_path = args
        .manifest
        .or_else(|| ctx.file.manifest.clone())
        .ok_or_else(|| {
            Error::Validation("scan needs --manifest (or manifest in the config file)".into())
        })?;
    let out = ctx.out_path(&args.out, "matrix.hym")?;
    let report_path = ctx.out_path(&args.report, "scan_report.jsonl")?;
    ctx.guard(&out)?;
    ctx.guard(&sidecar_path(&out))?;
    ctx.guard(&report_path)?;

    let catalog = load_catalog(&args.catalog)?;
    let manifest = load_manifest(&manifest_path)?;
    let automaton = compile(&catalog)?;
    let options = ScanOptions {
        chunk_size: ctx.chunk_size(args.chunk_size),
        exec: ctx.exec(),
    };
    let outcome = scan_corpus(&automaton, &manifest, &options)?;
    save_matrix(&outcome.matrix, &out)?;
    let mut buf = Vec::new();
    outcome.report.write_jsonl(&mut buf)?;
    std::fs::write(&report_path, buf)
        .with_context(|| format!("writing {}", report_path.display()))?;

    let mut meta = CommandMeta::new(ctx, "scan", 0);
    meta.setting("chunk_size", options.chunk_size)
        .setting("out", out.display())
        .setting("report", report_path.display());
    meta.input_file(&args.catalog)?;
    meta.input_file(&manifest_path)?;
    meta.write_sidecar(&out)?;

    let m = &outcome.matrix;
    println!(
        "matrix {}: {} rows x {} columns, {} set bits",
        out.display(),
        m.n_rows(),
        m.n_cols(),
        m.nnz()
    );
    if outcome.report.failed > 0 {
        eprintln!(
            "warning: {} of {} rows failed to read; their matrix rows are empty \
             (see {})",
            outcome.report.failed,
            m.n_rows(),
            report_path.display()
        );
        return Ok(2);
    }
    Ok(0)
}

fn cmd_select(ctx: &Ctx, args: SelectArgs) -> anyhow::Result<u8> {
    let matrix = load_matrix(&args.matrix)?;
    let mode = ctx.mode(&args.mode)?;
    let ks = ctx.target_k(&args.k)?;
    let side_path = args.side.clone().or_else(|| ctx.file.side_features.clone());

    let manifest = match &args.manifest {
        Some(p) => load_manifest(p)?,
        None => manifest_from_matrix(&matrix, Split::Train)?,
    };
    let side_table = side_path
        .as_ref()
        .map(|p| load_side_features(p, &manifest))
        .transpose()?;
    let aligned = align(&matrix, &manifest, side_table.as_ref())?;
    let view = aligned.view(Split::Train);
    if view.n_rows() == 0 {
        return Err(Error::Validation(
            "manifest has no TRAIN rows; selection refuses to run".into(),
        )
        .into());
    }
    let labels = view.labels().to_vec();

    let design = match mode {
        SelectionMode::Independent => independent_design(&view),
        SelectionMode::Conditional => {
            if side_table.is_none() {
                return Err(Error::Validation(
                    "conditional mode needs --side (and optionally --baseline)".into(),
                )
                .into());
            }
            let frame = side_frame(&view)?;
            let probs = match &args.baseline {
                Some(p) => AnyModel::load(p)?.proba(&frame)?,
                None => {
                    let learner = ctx.learner(&args.learner)?;
                    let cfg = ctx.train_config(None, None, None);
                    let baseline_path = ctx.out_path(&None, "baseline.json")?;
                    ctx.guard(&baseline_path)?;
                    match learner {
                        Learner::Gbdt => {
                            let m = fit_gbdt(&frame, &labels, &cfg, ctx.exec())?;
                            save_gbdt(&m, &baseline_path)?;
                            predict_proba(&m, &frame)?
                        }
                        Learner::Linear => {
                            let m = fit_linear_unpenalized(&frame, &labels)?;
                            save_linear(&m, &baseline_path)?;
                            m.predict_proba(&frame)?
                        }
                    }
                }
            };
            prepare_conditional(&view, &probs, false)?
        }
        SelectionMode::Stacked => {
            if side_table.is_none() {
                return Err(Error::Validation("stacked mode needs --side".into()).into());
            }
            prepare_stacked(&view)?
        }
    };
    for note in &design.diagnostics {
        eprintln!("note: {note}");
    }

    let path = lambda_path(&design, &labels)?;
    println!(
        "fitted {} models down the path; all-zero threshold {:.6}",
        path.models.len(),
        path.lambda_max
    );

    let mut meta = CommandMeta::new(ctx, "select", 0);
    meta.setting("mode", mode.as_str())
        .setting("k", format!("{ks:?}"))
        .setting("lambda_max", path.lambda_max)
        .setting("rows", view.n_rows());
    meta.input_file(&args.matrix)?;
    if let Some(p) = &args.manifest {
        meta.input_file(p)?;
    }
    if let Some(p) = &side_path {
        meta.input_file(p)?;
    }
    if let Some(p) = &args.baseline {
        meta.input_file(p)?;
    }

    for &k in &ks {
        let model = path.pick(k);
        let sel = select_top_k(model, k, &matrix.col_ids);
        let out = ctx.out_path(&None, &format!("selection_k{k}.json"))?;
        ctx.guard(&out)?;
        save_selection_model(model, &matrix.col_ids, &out)?;
        meta.setting(&format!("out_k{k}"), out.display());
        let short = sel
            .shortfall
            .map(|s| format!(" (only {s} non-zero)"))
            .unwrap_or_default();
        println!(
            "k={k}: {} sub-signatures at lambda {:.6}{short} -> {}",
            sel.feature_ids.len(),
            sel.lambda_used,
            out.display()
        );
    }
    let meta_path = ctx.workdir().join("select.meta.json");
    write_json_file(&meta_path, &meta)?;
    Ok(0)
}

fn cmd_train(ctx: &Ctx, args: TrainArgs) -> anyhow::Result<u8> {
    let matrix = load_matrix(&args.matrix)?;
    let side_path = args.side.clone().or_else(|| ctx.file.side_features.clone());
    let manifest = match &args.manifest {
        Some(p) => load_manifest(p)?,
        None => manifest_from_matrix(&matrix, Split::Train)?,
    };
    let side_table = side_path
        .as_ref()
        .map(|p| load_side_features(p, &manifest))
        .transpose()?;
    let aligned = align(&matrix, &manifest, side_table.as_ref())?;
    let view = aligned.view(Split::Train);
    if view.n_rows() == 0 {
        return Err(Error::Validation("manifest has no TRAIN rows to fit on".into()).into());
    }
    let labels = view.labels().to_vec();

    let frame = match &args.selection {
        Some(sel_path) => {
            let loaded = load_selection_model(sel_path)?;
            let sel = select_top_k(&loaded.model, args.k.unwrap_or(usize::MAX), &loaded.feature_ids);
            if sel.feature_ids.is_empty() {
                return Err(Error::Validation(
                    "the selection file has no non-zero sub-signature weights".into(),
                )
                .into());
            }
            let cols = matrix_positions(&matrix.col_ids, &sel.feature_ids)?;
            if side_table.is_some() {
                combined_frame(&view, &cols, &sel.feature_ids)?
            } else {
                yara_frame(&view, &cols, &sel.feature_ids)?
            }
        }
        None if side_table.is_some() => side_frame(&view)?,
        None => {
            return Err(Error::Validation(
                "train needs --selection or --side to form a feature frame".into(),
            )
            .into())
        }
    };

    let learner = ctx.learner(&args.learner)?;
    let cfg = ctx.train_config(args.trees, args.depth, args.learning_rate);
    let out = ctx.out_path(&args.out, "model.json")?;
    ctx.guard(&out)?;

    let report = match learner {
        Learner::Gbdt => {
            let m = fit_gbdt(&frame, &labels, &cfg, ctx.exec())?;
            save_gbdt(&m, &out)?;
            hayama_core::analysis::evaluate_model(&m, &frame, &labels, "train")?
        }
        Learner::Linear => {
            let m = fit_linear_unpenalized(&frame, &labels)?;
            save_linear(&m, &out)?;
            hayama_core::analysis::evaluate_model(&m, &frame, &labels, "train")?
        }
    };

    let mut meta = CommandMeta::new(ctx, "train", 0);
    meta.setting("learner", learner.as_str())
        .setting("n_trees", cfg.n_trees)
        .setting("max_depth", cfg.max_depth)
        .setting("learning_rate", cfg.learning_rate)
        .setting("frame_cols", frame.n_cols)
        .setting("out", out.display());
    meta.input_file(&args.matrix)?;
    if let Some(p) = &args.manifest {
        meta.input_file(p)?;
    }
    if let Some(p) = &side_path {
        meta.input_file(p)?;
    }
    if let Some(p) = &args.selection {
        meta.input_file(p)?;
    }
    meta.write_sidecar(&out)?;

    println!(
        "model {}: {} on {} rows x {} features; train accuracy {:.4}, area {:.4}",
        out.display(),
        learner.as_str(),
        frame.n_rows,
        frame.n_cols,
        report.accuracy,
        report.full_auc
    );
    Ok(0)
}

#[derive(Serialize)]
struct EvalArtifact {
    format: &'static str,
    version: u32,
    meta: CommandMeta,
    model_kind: String,
    report: EvalReport,
}

fn cmd_eval(ctx: &Ctx, args: EvalArgs) -> anyhow::Result<u8> {
    let model = AnyModel::load(&args.model)?;
    let matrix = load_matrix(&args.matrix)?;
    let split = match &args.split {
        Some(s) => Split::from_token(s).ok_or_else(|| {
            Error::Validation(format!("unknown split {s:?}; expected train, test, or valid"))
        })?,
        None => Split::Test,
    };
    let manifest = match &args.manifest {
        Some(p) => load_manifest(p)?,
        None => manifest_from_matrix(&matrix, split)?,
    };
    let side_table = args
        .side
        .as_ref()
        .map(|p| load_side_features(p, &manifest))
        .transpose()?;
    let aligned = align(&matrix, &manifest, side_table.as_ref())?;
    let view = aligned.view(split);
    if view.n_rows() == 0 {
        return Err(
            Error::Validation(format!("manifest has no {split} rows to score")).into(),
        );
    }

    let space = model.feature_space();
    if !space.side_names.is_empty() && view.side_names() != space.side_names {
        return Err(Error::Validation(format!(
            "side columns {:?} do not match the model's {:?}",
            view.side_names(),
            space.side_names
        ))
        .into());
    }
    let frame = if space.yara_ids.is_empty() && space.side_names.is_empty() {
        return Err(Error::Validation("the model declares no feature columns".into()).into());
    } else if space.yara_ids.is_empty() {
        side_frame(&view)?
    } else {
        let cols = matrix_positions(&matrix.col_ids, &space.yara_ids)?;
        if space.side_names.is_empty() {
            yara_frame(&view, &cols, &space.yara_ids)?
        } else {
            combined_frame(&view, &cols, &space.yara_ids)?
        }
    };

    let split_name = split.as_str().to_ascii_lowercase();
    let report =
        hayama_core::analysis::evaluate_model(&model, &frame, view.labels(), &split_name)?;

    let out = ctx.out_path(&args.out, "eval_report.json")?;
    ctx.guard(&out)?;
    let mut meta = CommandMeta::new(ctx, "eval", 0);
    meta.setting("split", &split_name).setting("out", out.display());
    meta.input_file(&args.model)?;
    meta.input_file(&args.matrix)?;
    if let Some(p) = &args.manifest {
        meta.input_file(p)?;
    }
    if let Some(p) = &args.side {
        meta.input_file(p)?;
    }
    println!(
        "{split_name}: n={} accuracy={:.4} partial_area={:.4} full_area={:.4}",
        report.n, report.accuracy, report.partial_auc, report.full_auc
    );
    if let Some(rp) = &args.roc_out {
        ctx.guard(rp)?;
        write_roc_csv(rp, &report.curve)?;
    }
    write_json_file(
        &out,
        &EvalArtifact {
            format: "hayama-eval",
            version: 1,
            meta,
            model_kind: model.kind().to_string(),
            report,
        },
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct StatsArtifact {
    format: &'static str,
    version: u32,
    meta: CommandMeta,
    rows: String,
    stats: Vec<FeatureStats>,
}

fn cmd_stats(ctx: &Ctx, args: StatsArgs) -> anyhow::Result<u8> {
    let matrix = load_matrix(&args.matrix)?;
    let (stats, rows_used) = match &args.manifest {
        Some(p) => {
            let manifest = load_manifest(p)?;
            let aligned = align(&matrix, &manifest, None)?;
            let view = aligned.view(Split::Train);
            if view.n_rows() == 0 {
                return Err(Error::Validation("manifest has no TRAIN rows".into()).into());
            }
            let s = per_feature_stats_rows(&matrix, &view.indices, view.labels())?;
            (s, "train".to_string())
        }
        None => (per_feature_stats(&matrix)?, "all".to_string()),
    };
    let out = ctx.out_path(&args.out, "feature_stats.json")?;
    ctx.guard(&out)?;

    let mut meta = CommandMeta::new(ctx, "analyze stats", 0);
    meta.setting("rows", &rows_used).setting("out", out.display());
    meta.input_file(&args.matrix)?;
    if let Some(p) = &args.manifest {
        meta.input_file(p)?;
    }
    let never = stats.iter().filter(|s| s.never_fired).count();
    println!(
        "{}: {} columns over {} rows ({} never fired)",
        out.display(),
        stats.len(),
        rows_used,
        never
    );
    write_json_file(
        &out,
        &StatsArtifact {
            format: "hayama-feature-stats",
            version: 1,
            meta,
            rows: rows_used,
            stats,
        },
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct EcdfArtifact {
    format: &'static str,
    version: u32,
    meta: CommandMeta,
    #[serde(skip_serializing_if = "Option::is_none")]
    malware: Option<Vec<(usize, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    benign: Option<Vec<(usize, f64)>>,
}

fn cmd_ecdf(ctx: &Ctx, args: EcdfArgs) -> anyhow::Result<u8> {
    let matrix = load_matrix(&args.matrix)?;
    let wanted = match &args.class {
        Some(s) => vec![ClassFilter::from_token(s).ok_or_else(|| {
            Error::Validation(format!("unknown class {s:?}; expected malware or benign"))
        })?],
        None => vec![ClassFilter::Malware, ClassFilter::Benign],
    };
    let mut malware = None;
    let mut benign = None;
    for class in wanted {
        let points = occurrence_ecdf(&matrix, class)?;
        match class {
            ClassFilter::Malware => malware = Some(points),
            ClassFilter::Benign => benign = Some(points),
        }
    }
    let out = ctx.out_path(&args.out, "ecdf.json")?;
    ctx.guard(&out)?;
    let mut meta = CommandMeta::new(ctx, "analyze ecdf", 0);
    meta.setting("out", out.display());
    meta.input_file(&args.matrix)?;
    println!(
        "{}: fire-count distribution over {} columns",
        out.display(),
        matrix.n_cols()
    );
    write_json_file(
        &out,
        &EcdfArtifact {
            format: "hayama-ecdf",
            version: 1,
            meta,
            malware,
            benign,
        },
    )?;
    Ok(0)
}

/// Selected sub-signature indicator columns and side columns over the rows
/// of one view, as dense f64 vectors.
struct Blocks {
    yara_ids: Vec<u64>,
    yara_cols: Vec<Vec<f64>>,
    side_names: Vec<String>,
    side_cols: Vec<Vec<f64>>,
    n_rows: usize,
    rows_used: String,
}

fn gather_blocks(args: &CorrArgs, meta: &mut CommandMeta) -> anyhow::Result<Blocks> {
    let matrix = load_matrix(&args.matrix)?;
    let manifest = match &args.manifest {
        Some(p) => load_manifest(p)?,
        None => manifest_from_matrix(&matrix, Split::Train)?,
    };
    let side_table = load_side_features(&args.side, &manifest)?;
    let aligned = align(&matrix, &manifest, Some(&side_table))?;
    let view = aligned.view(Split::Train);
    if view.n_rows() == 0 {
        return Err(Error::Validation("manifest has no TRAIN rows".into()).into());
    }

    let loaded = load_selection_model(&args.selection)?;
    let sel = select_top_k(&loaded.model, args.k.unwrap_or(usize::MAX), &loaded.feature_ids);
    if sel.feature_ids.is_empty() {
        return Err(Error::Validation(
            "the selection file has no non-zero sub-signature weights".into(),
        )
        .into());
    }
    let cols = matrix_positions(&matrix.col_ids, &sel.feature_ids)?;

    let n = view.n_rows();
    let yara_cols: Vec<Vec<f64>> = cols
        .iter()
        .map(|&c| {
            (0..n)
                .map(|i| f64::from(view.sparse_row(i).binary_search(&(c as u32)).is_ok()))
                .collect()
        })
        .collect();
    let side_names = view.side_names().to_vec();
    let side_cols: Vec<Vec<f64>> = (0..side_names.len())
        .map(|m| {
            (0..n)
                .map(|i| view.side_row(i).map_or(0.0, |r| r[m]))
                .collect()
        })
        .collect();

    meta.input_file(&args.matrix)?;
    meta.input_file(&args.selection)?;
    meta.input_file(&args.side)?;
    if let Some(p) = &args.manifest {
        meta.input_file(p)?;
    }
    Ok(Blocks {
        yara_ids: sel.feature_ids,
        yara_cols,
        side_names,
        side_cols,
        n_rows: n,
        rows_used: if args.manifest.is_some() { "train" } else { "all" }.to_string(),
    })
}

fn hex_ids(ids: &[u64]) -> Vec<String> {
    ids.iter().map(|id| format!("{id:016x}")).collect()
}

#[derive(Serialize)]
struct CorrArtifact {
    format: &'static str,
    version: u32,
    meta: CommandMeta,
    rows: String,
    n_rows: usize,
    yara_ids: Vec<String>,
    side_names: Vec<String>,
    correlations: CorrelationMatrix,
}

fn cmd_corr(ctx: &Ctx, args: CorrArgs) -> anyhow::Result<u8> {
    let mut meta = CommandMeta::new(ctx, "analyze corr", 0);
    let blocks = gather_blocks(&args, &mut meta)?;
    let correlations = correlation_matrix(&blocks.yara_cols, &blocks.side_cols)?;
    let out = ctx.out_path(&args.out, "correlations.json")?;
    ctx.guard(&out)?;
    meta.setting("rows", &blocks.rows_used).setting("out", out.display());
    println!(
        "{}: {} x {} correlation matrix over {} rows",
        out.display(),
        correlations.n,
        correlations.n,
        blocks.n_rows
    );
    write_json_file(
        &out,
        &CorrArtifact {
            format: "hayama-correlations",
            version: 1,
            meta,
            rows: blocks.rows_used,
            n_rows: blocks.n_rows,
            yara_ids: hex_ids(&blocks.yara_ids),
            side_names: blocks.side_names,
            correlations,
        },
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct PlsArtifact {
    format: &'static str,
    version: u32,
    meta: CommandMeta,
    rows: String,
    n_rows: usize,
    yara_ids: Vec<String>,
    side_names: Vec<String>,
    max_correlation: f64,
}

fn cmd_pls(ctx: &Ctx, args: CorrArgs) -> anyhow::Result<u8> {
    let mut meta = CommandMeta::new(ctx, "analyze pls", 0);
    let blocks = gather_blocks(&args, &mut meta)?;
    let max_correlation = pls_max_correlation(&blocks.yara_cols, &blocks.side_cols)?;
    let out = ctx.out_path(&args.out, "pls.json")?;
    ctx.guard(&out)?;
    meta.setting("rows", &blocks.rows_used).setting("out", out.display());
    println!(
        "{}: first-component correlation {:.6} over {} rows",
        out.display(),
        max_correlation,
        blocks.n_rows
    );
    write_json_file(
        &out,
        &PlsArtifact {
            format: "hayama-pls",
            version: 1,
            meta,
            rows: blocks.rows_used,
            n_rows: blocks.n_rows,
            yara_ids: hex_ids(&blocks.yara_ids),
            side_names: blocks.side_names,
            max_correlation,
        },
    )?;
    Ok(0)
}

fn cmd_pipeline(ctx: &Ctx, args: PipelineArgs) -> anyhow::Result<u8> {
    let rules_dir = args
        .rules
        .or_else(|| ctx.file.rules_dir.clone())
        .ok_or_else(|| {
            Error::Validation("pipeline needs --rules (or rules_dir in the config file)".into())
        })?;
    let manifest = args
        .manifest
        .or_else(|| ctx.file.manifest.clone())
        .ok_or_else(|| {
            Error::Validation("pipeline needs --manifest (or manifest in the config file)".into())
        })?;
    let config = PipelineConfig {
        rules_dir,
        manifest,
        side_features: args.side.or_else(|| ctx.file.side_features.clone()),
        workdir: ctx.workdir(),
        mode: ctx.mode(&args.mode)?,
        target_k: ctx.target_k(&args.k)?,
        learner: ctx.learner(&args.learner)?,
        chunk_size: ctx.chunk_size(args.chunk_size),
        workers: ctx.workers(),
        train: ctx.train_config(args.trees, args.depth, args.learning_rate),
        seed: ctx.seed(0),
    };

    let outcome = run_pipeline(&config, ctx.global.force)?;
    let s = &outcome.summary;
    println!(
        "pipeline {}: {} sub-signatures, {} x {} matrix, {} set bits",
        outcome.workdir.display(),
        s.catalog_size,
        s.matrix_rows,
        s.matrix_cols,
        s.matrix_nnz
    );
    println!("series          k  selected  accuracy  partial_area  full_area");
    for row in &s.series {
        println!(
            "{:<12} {:>4}  {:>8}  {:>8.4}  {:>12.4}  {:>9.4}",
            row.series, row.k, row.n_selected, row.accuracy, row.partial_auc, row.full_auc
        );
    }
    if s.scan_failures > 0 {
        eprintln!(
            "warning: {} corpus rows failed to read during the scan",
            s.scan_failures
        );
        return Ok(2);
    }
    Ok(0)
}

fn cmd_synth(ctx: &Ctx, args: SynthArgs) -> anyhow::Result<u8> {
    let out_dir = match &args.out {
        Some(p) => p.clone(),
        None => ctx.workdir().join("synth"),
    };
    let mut spec = SyntheticSpec::default();
    if let Some(v) = args.benign {
        spec.n_benign = v;
    }
    if let Some(v) = args.malware {
        spec.n_malware = v;
    }
    if let Some(v) = args.patterns {
        spec.n_patterns = v;
    }
    if let Some(v) = args.size_min {
        spec.size_range.0 = v;
    }
    if let Some(v) = args.size_max {
        spec.size_range.1 = v;
    }
    if let Some(v) = args.plant_rate_malware {
        spec.plant_rate_malware = v;
    }
    if let Some(v) = args.plant_rate_benign {
        spec.plant_rate_benign = v;
    }
    if let Some(v) = args.signal_side {
        spec.n_signal_side = v;
    }
    if let Some(v) = args.noise_side {
        spec.n_noise_side = v;
    }
    spec.seed = ctx.seed(spec.seed);
    spec.validate()?;
    ctx.guard(&out_dir.join("manifest.csv"))?;

    let output = generate_synthetic(&spec, &out_dir)?;

    let mut meta = CommandMeta::new(ctx, "synth", spec.seed);
    meta.setting("n_benign", spec.n_benign)
        .setting("n_malware", spec.n_malware)
        .setting("n_patterns", spec.n_patterns)
        .setting("size_min", spec.size_range.0)
        .setting("size_max", spec.size_range.1)
        .setting("plant_rate_malware", spec.plant_rate_malware)
        .setting("plant_rate_benign", spec.plant_rate_benign)
        .setting("n_signal_side", spec.n_signal_side)
        .setting("n_noise_side", spec.n_noise_side)
        .setting("out", out_dir.display());
    write_json_file(&out_dir.join("synth.meta.json"), &meta)?;

    println!(
        "synthetic corpus {}: {} files, {} patterns",
        out_dir.display(),
        output.n_files,
        output.n_patterns
    );
    println!("manifest: {}", output.manifest_path.display());
    println!("rules:    {}", output.rules_dir.display());
    println!("side:     {}", output.side_path.display());
    println!("truth:    {}", output.truth_path.display());
    Ok(0)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let ctx = Ctx::load(cli.global)?;
    match cli.command {
        Command::Harvest(a) => cmd_harvest(&ctx, a),
        Command::Scan(a) => cmd_scan(&ctx, a),
        Command::Select(a) => cmd_select(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Analyze(a) => match a.what {
            AnalyzeCmd::Stats(s) => cmd_stats(&ctx, s),
            AnalyzeCmd::Ecdf(s) => cmd_ecdf(&ctx, s),
            AnalyzeCmd::Corr(s) => cmd_corr(&ctx, s),
            AnalyzeCmd::Pls(s) => cmd_pls(&ctx, s),
        },
        Command::Pipeline(a) => cmd_pipeline(&ctx, a),
        Command::Synth(a) => cmd_synth(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
