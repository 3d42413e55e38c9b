//! End-to-end orchestration: harvest rules, scan the corpus into an
//! occurrence matrix, join labels and side features, select sub-signatures
//! on the train split, train the final learner for each requested feature
//! budget, and evaluate everything on the test split.
//!
//! Every artifact lands in the workdir, guarded by a lock file against
//! concurrent runs and by an overwrite check unless `force` is passed.
//! Outputs contain no wall-clock values, so a rerun with identical inputs
//! and seed reproduces every file byte for byte. `provenance.json` records
//! SHA-256 digests of the inputs and of each written artifact.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{evaluate_scores, EvalReport, RocCurve};
use crate::boosting::{
    combined_frame, fit_gbdt, fit_linear_unpenalized, predict_proba, save_gbdt, save_linear,
    side_frame, yara_frame, FeatureFrame, TrainConfig,
};
use crate::dataset::{align, load_manifest, load_side_features, DatasetView, Split};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::harvest::harvest;
use crate::scanner::{compile, save_matrix, scan_corpus, ScanOptions, DEFAULT_CHUNK_SIZE};
use crate::selection::{
    independent_design, lambda_path, prepare_conditional, prepare_stacked, save_selection_model,
    select_top_k, SelectedFeatureSet, SelectionMode,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Learner {
    Gbdt,
    Linear,
}

impl Learner {
    pub fn as_str(self) -> &'static str {
        match self {
            Learner::Gbdt => "gbdt",
            Learner::Linear => "linear",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gbdt" => Some(Learner::Gbdt),
            "linear" => Some(Learner::Linear),
            _ => None,
        }
    }
}

fn default_target_k() -> Vec<usize> {
    vec![10, 50, 100, 300]
}

fn default_chunk_size() -> usize {
    DEFAULT_CHUNK_SIZE
}

fn default_learner() -> Learner {
    Learner::Gbdt
}

fn default_mode() -> SelectionMode {
    SelectionMode::Conditional
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub rules_dir: PathBuf,
    pub manifest: PathBuf,
    #[serde(default)]
    pub side_features: Option<PathBuf>,
    pub workdir: PathBuf,
    #[serde(default = "default_mode")]
    pub mode: SelectionMode,
    #[serde(default = "default_target_k")]
    pub target_k: Vec<usize>,
    #[serde(default = "default_learner")]
    pub learner: Learner,
    #[serde(default = "default_chunk_size")]
    pub chunk_size: usize,
    /// Worker threads for the parallel stages; 0 uses the global pool.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub seed: u64,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_k.is_empty() || self.target_k.iter().any(|&k| k == 0) {
            return Err(Error::Validation(
                "target_k must list at least one positive feature budget".into(),
            ));
        }
        if self.mode != SelectionMode::Independent && self.side_features.is_none() {
            return Err(Error::Validation(format!(
                "{} mode needs side features to build its design",
                self.mode.as_str()
            )));
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn exec(&self) -> Execution {
        Execution::with_workers(self.workers)
    }
}

/// Removes the lock file when the run ends, panicking or not.
#[derive(Debug)]
struct WorkdirLock {
    path: PathBuf,
}

impl WorkdirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(".hayama-lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(WorkdirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::WorkdirLocked(path))
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// One `(series, k)` measurement row of the experiment curve.
#[derive(Clone, Debug, Serialize)]
pub struct SeriesRow {
    /// `combined`, `yara_only`, or `side_only`.
    pub series: String,
    /// Requested feature budget; 0 for the k-independent baseline row.
    pub k: usize,
    pub n_selected: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shortfall: Option<usize>,
    pub accuracy: f64,
    pub partial_auc: f64,
    pub full_auc: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct InputDigests {
    pub rules_sha256: String,
    pub manifest_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub side_sha256: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineSummary {
    pub format: String,
    pub version: u32,
    pub config: PipelineConfig,
    pub inputs: InputDigests,
    pub catalog_size: usize,
    pub matrix_rows: usize,
    pub matrix_cols: usize,
    pub matrix_nnz: usize,
    pub scan_failures: usize,
    pub design_notes: Vec<String>,
    pub lambda_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<EvalReport>,
    pub series: Vec<SeriesRow>,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub summary: PipelineSummary,
    pub selections: Vec<SelectedFeatureSet>,
    pub workdir: PathBuf,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex_digest(&bytes))
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Digest over every file under a directory, keyed by relative path so
/// renames change the digest.
fn sha256_tree(dir: &Path) -> Result<String> {
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
        h.update(std::fs::read(f).map_err(|e| Error::io(f, e))?);
        h.update([1u8]);
    }
    Ok(hex::encode(h.finalize()))
}

fn write_roc_csv(path: &Path, curve: &RocCurve) -> Result<()> {
    let mut out = String::from("fpr,tpr\n");
    for &(fpr, tpr) in &curve.points {
        out.push_str(&format!("{fpr},{tpr}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Train/score one learner on precomputed frames and report test metrics.
fn fit_and_eval(
    learner: Learner,
    train_frame: &FeatureFrame,
    test_frame: &FeatureFrame,
    train_labels: &[u8],
    test_labels: &[u8],
    cfg: &TrainConfig,
    exec: Execution,
    model_path: &Path,
) -> Result<EvalReport> {
    let scores = match learner {
        Learner::Gbdt => {
            let model = fit_gbdt(train_frame, train_labels, cfg, exec)?;
            save_gbdt(&model, model_path)?;
            predict_proba(&model, test_frame)?
        }
        Learner::Linear => {
            let model = fit_linear_unpenalized(train_frame, train_labels)?;
            save_linear(&model, model_path)?;
            model.predict_proba(test_frame)?
        }
    };
    evaluate_scores("test", &scores, test_labels)
}

fn series_row(series: &str, k: usize, sel: Option<&SelectedFeatureSet>, r: &EvalReport) -> SeriesRow {
    SeriesRow {
        series: series.to_string(),
        k,
        n_selected: sel.map_or(0, |s| s.feature_ids.len()),
        lambda: sel.map(|s| s.lambda_used),
        shortfall: sel.and_then(|s| s.shortfall),
        accuracy: r.accuracy,
        partial_auc: r.partial_auc,
        full_auc: r.full_auc,
    }
}

/// Positions of the selected catalog ids inside the matrix column list.
fn matrix_positions(col_ids: &[u64], wanted: &[u64]) -> Result<Vec<usize>> {
    wanted
        .iter()
        .map(|id| {
            col_ids
                .binary_search(id)
                .map_err(|_| Error::Validation(format!("selected id {id:016x} not in matrix")))
        })
        .collect()
}

fn guard_splits(train: &DatasetView, test: &DatasetView) -> Result<()> {
    if train.n_rows() == 0 {
        return Err(Error::Validation(
            "manifest has no TRAIN rows; selection refuses to run".into(),
        ));
    }
    if test.n_rows() == 0 {
        return Err(Error::Validation(
            "manifest has no TEST rows; nothing to evaluate".into(),
        ));
    }
    let test_rows: std::collections::HashSet<usize> = test.indices.iter().copied().collect();
    if train.indices.iter().any(|i| test_rows.contains(i)) {
        return Err(Error::Validation(
            "train and test splits share rows; selection would leak".into(),
        ));
    }
    Ok(())
}

pub fn run_pipeline(config: &PipelineConfig, force: bool) -> Result<PipelineOutcome> {
    config.validate()?;
    let workdir = &config.workdir;
    let models_dir = workdir.join("models");
    let roc_dir = workdir.join("roc");
    std::fs::create_dir_all(&models_dir).map_err(|e| Error::io(&models_dir, e))?;
    std::fs::create_dir_all(&roc_dir).map_err(|e| Error::io(&roc_dir, e))?;

    let _lock = WorkdirLock::acquire(workdir)?;
    for name in ["catalog.jsonl", "matrix.hym", "curves.csv", "summary.json"] {
        let p = workdir.join(name);
        if p.exists() && !force {
            return Err(Error::OutputExists(p));
        }
    }

    let inputs = InputDigests {
        rules_sha256: sha256_tree(&config.rules_dir)?,
        manifest_sha256: sha256_file(&config.manifest)?,
        side_sha256: config
            .side_features
            .as_ref()
            .map(|p| sha256_file(p))
            .transpose()?,
    };

    let exec = config.exec();
    let mut written: Vec<PathBuf> = Vec::new();

    // Harvest.
    let harvested = stage("harvest", harvest(std::slice::from_ref(&config.rules_dir), exec))?;
    let catalog = harvested.catalog;
    let catalog_path = workdir.join("catalog.jsonl");
    stage("harvest", crate::harvest::save_catalog(&catalog, &catalog_path))?;
    written.push(catalog_path);

    // Scan.
    let manifest = stage("scan", load_manifest(&config.manifest))?;
    let automaton = stage("scan", compile(&catalog))?;
    let options = ScanOptions {
        chunk_size: config.chunk_size,
        exec,
    };
    let outcome = stage("scan", scan_corpus(&automaton, &manifest, &options))?;
    let matrix = outcome.matrix;
    let matrix_path = workdir.join("matrix.hym");
    stage("scan", save_matrix(&matrix, &matrix_path))?;
    written.push(matrix_path.clone());
    written.push(crate::scanner::sidecar_path(&matrix_path));
    let report_path = workdir.join("scan_report.jsonl");
    {
        let mut buf = Vec::new();
        stage("scan", outcome.report.write_jsonl(&mut buf))?;
        std::fs::write(&report_path, buf).map_err(|e| Error::io(&report_path, e))?;
        written.push(report_path);
    }

    // Align.
    let side = config
        .side_features
        .as_ref()
        .map(|p| stage("align", load_side_features(p, &manifest)))
        .transpose()?;
    let aligned = stage("align", align(&matrix, &manifest, side.as_ref()))?;
    let train_view = aligned.view(Split::Train);
    let test_view = aligned.view(Split::Test);
    stage("align", guard_splits(&train_view, &test_view))?;
    let train_labels = train_view.labels().to_vec();
    let test_labels = test_view.labels().to_vec();

    let mut train_cfg = config.train.clone();
    train_cfg.seed = config.seed;

    // Side-only baseline, shared by every mode.
    let mut baseline_report = None;
    let mut baseline_train_probs = None;
    if side.is_some() {
        let f0_train = stage("baseline", side_frame(&train_view))?;
        let f0_test = stage("baseline", side_frame(&test_view))?;
        let model_path = models_dir.join("baseline.json");
        let report = stage(
            "baseline",
            fit_and_eval(
                config.learner,
                &f0_train,
                &f0_test,
                &train_labels,
                &test_labels,
                &train_cfg,
                exec,
                &model_path,
            ),
        )?;
        written.push(model_path);
        // Selection in conditional mode needs the baseline's train-split
        // probabilities; recompute them from the saved learner kind.
        let probs = match config.learner {
            Learner::Gbdt => {
                let m = stage("baseline", crate::boosting::load_gbdt(&models_dir.join("baseline.json")))?;
                stage("baseline", predict_proba(&m, &f0_train))?
            }
            Learner::Linear => {
                let m = stage("baseline", crate::boosting::load_linear(&models_dir.join("baseline.json")))?;
                stage("baseline", m.predict_proba(&f0_train))?
            }
        };
        baseline_train_probs = Some(probs);
        let roc_path = roc_dir.join("side_only.csv");
        write_roc_csv(&roc_path, &report.curve)?;
        written.push(roc_path);
        baseline_report = Some(report);
    }

    // Selection on the train split only.
    let design = match config.mode {
        SelectionMode::Independent => independent_design(&train_view),
        SelectionMode::Conditional => {
            let probs = baseline_train_probs
                .as_ref()
                .expect("validated: conditional mode has side features");
            stage("select", prepare_conditional(&train_view, probs, false))?
        }
        SelectionMode::Stacked => stage("select", prepare_stacked(&train_view))?,
    };
    let design_notes = design.diagnostics.clone();
    let path = stage("select", lambda_path(&design, &train_labels))?;

    let mut series = Vec::new();
    if let Some(b) = &baseline_report {
        series.push(series_row("side_only", 0, None, b));
    }

    let mut selections = Vec::new();
    for &k in &config.target_k {
        let model = path.pick(k);
        let sel = select_top_k(model, k, &matrix.col_ids);
        let sel_path = models_dir.join(format!("selection_k{k}.json"));
        stage("select", save_selection_model(model, &matrix.col_ids, &sel_path))?;
        written.push(sel_path);

        let cols = stage("train", matrix_positions(&matrix.col_ids, &sel.feature_ids))?;
        for (series_name, with_side) in [("combined", true), ("yara_only", false)] {
            if with_side && side.is_none() && config.mode == SelectionMode::Independent {
                // Without side features combined would duplicate yara_only.
                continue;
            }
            let build = if with_side { combined_frame } else { yara_frame };
            let f_train = stage("train", build(&train_view, &cols, &sel.feature_ids))?;
            let f_test = stage("train", build(&test_view, &cols, &sel.feature_ids))?;
            let model_path = models_dir.join(format!("final_{series_name}_k{k}.json"));
            let report = stage(
                "train",
                fit_and_eval(
                    config.learner,
                    &f_train,
                    &f_test,
                    &train_labels,
                    &test_labels,
                    &train_cfg,
                    exec,
                    &model_path,
                ),
            )?;
            written.push(model_path);
            let roc_path = roc_dir.join(format!("{series_name}_k{k}.csv"));
            write_roc_csv(&roc_path, &report.curve)?;
            written.push(roc_path);
            series.push(series_row(series_name, k, Some(&sel), &report));
        }
        selections.push(sel);
    }

    // Curve CSV.
    let curves_path = workdir.join("curves.csv");
    {
        let mut out = String::from("series,k,n_selected,accuracy,partial_auc,full_auc\n");
        for row in &series {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.series, row.k, row.n_selected, row.accuracy, row.partial_auc, row.full_auc
            ));
        }
        std::fs::write(&curves_path, out).map_err(|e| Error::io(&curves_path, e))?;
        written.push(curves_path);
    }

    let summary = PipelineSummary {
        format: "hayama-summary".into(),
        version: 1,
        config: config.clone(),
        inputs,
        catalog_size: catalog.len(),
        matrix_rows: matrix.n_rows(),
        matrix_cols: matrix.n_cols(),
        matrix_nnz: matrix.nnz(),
        scan_failures: outcome.report.failed,
        design_notes,
        lambda_max: path.lambda_max,
        baseline: baseline_report,
        series,
    };
    let summary_path = workdir.join("summary.json");
    {
        let mut buf = serde_json::to_vec_pretty(&summary)
            .map_err(|e| Error::io(&summary_path, e.into()))?;
        buf.push(b'\n');
        std::fs::write(&summary_path, buf).map_err(|e| Error::io(&summary_path, e))?;
        written.push(summary_path);
    }

    // Provenance over everything written above.
    let mut outputs = BTreeMap::new();
    for p in &written {
        let rel = p
            .strip_prefix(workdir)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned();
        outputs.insert(rel, sha256_file(p)?);
    }
    #[derive(Serialize)]
    struct Provenance<'a> {
        format: &'a str,
        version: u32,
        config: &'a PipelineConfig,
        inputs: &'a InputDigests,
        outputs: &'a BTreeMap<String, String>,
    }
    let prov_path = workdir.join("provenance.json");
    {
        let prov = Provenance {
            format: "hayama-provenance",
            version: 1,
            config,
            inputs: &summary.inputs,
            outputs: &outputs,
        };
        let mut f = std::fs::File::create(&prov_path).map_err(|e| Error::io(&prov_path, e))?;
        serde_json::to_writer_pretty(&mut f, &prov).map_err(|e| Error::io(&prov_path, e.into()))?;
        f.write_all(b"\n").map_err(|e| Error::io(&prov_path, e))?;
    }

    Ok(PipelineOutcome {
        summary,
        selections,
        workdir: workdir.clone(),
    })
}
