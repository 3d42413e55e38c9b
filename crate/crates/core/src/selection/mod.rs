//! Sparse feature selection: L1-regularized logistic regression over
//! sub-signature occurrence columns, optionally augmented with side
//! information, plus the λ-path machinery that turns "give me k features"
//! into a concrete regularization strength.
//!
//! Three augmentation modes exist. `independent` fits over the binary
//! occurrence columns alone. `conditional` appends a single standardized,
//! unpenalized column holding a baseline model's probability per sample, so
//! selection is forced to find features that add information beyond the
//! baseline. `stacked` appends every standardized side column and penalizes
//! the whole design uniformly. Binary columns are never standardized; they
//! already share a scale.

pub(crate) mod solver;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetView;
use crate::error::{Error, Result};

use solver::{fit, null_model, FitOptions, Problem};

pub const LINEAR_FORMAT: &str = "hayama-linear";
pub const LINEAR_VERSION: u32 = 1;
pub const LAMBDA_GRID_SIZE: usize = 40;
pub const LAMBDA_FLOOR_RATIO: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    Independent,
    Conditional,
    Stacked,
}

impl SelectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMode::Independent => "independent",
            SelectionMode::Conditional => "conditional",
            SelectionMode::Stacked => "stacked",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token.trim().to_ascii_lowercase().as_str() {
            "independent" => Some(SelectionMode::Independent),
            "conditional" => Some(SelectionMode::Conditional),
            "stacked" => Some(SelectionMode::Stacked),
            _ => None,
        }
    }
}

/// Standardization applied to one appended dense column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub column: usize,
    pub mean: f64,
    pub std: f64,
}

/// Mixed design: `n_sparse` binary columns stored as per-row sorted index
/// slices, followed by standardized dense columns appended on the right.
pub struct DesignMatrix<'a> {
    sparse: Vec<&'a [u32]>,
    n_sparse: usize,
    dense: Vec<f64>,
    n_dense: usize,
    penalized: Vec<bool>,
    scaling: Vec<ColumnScale>,
    pub mode: SelectionMode,
    pub diagnostics: Vec<String>,
}

impl<'a> DesignMatrix<'a> {
    pub fn from_sparse(rows: Vec<&'a [u32]>, n_sparse: usize) -> Self {
        DesignMatrix {
            sparse: rows,
            n_sparse,
            dense: Vec::new(),
            n_dense: 0,
            penalized: vec![true; n_sparse],
            scaling: Vec::new(),
            mode: SelectionMode::Independent,
            diagnostics: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.sparse.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_sparse + self.n_dense
    }

    pub fn n_signature_cols(&self) -> usize {
        self.n_sparse
    }

    pub fn n_dense_cols(&self) -> usize {
        self.n_dense
    }

    pub fn is_penalized(&self, col: usize) -> bool {
        self.penalized[col]
    }

    pub fn penalized_mask(&self) -> &[bool] {
        &self.penalized
    }

    pub fn scaling(&self) -> &[ColumnScale] {
        &self.scaling
    }

    /// Appends one dense column, standardized to zero mean and unit
    /// variance over the rows present. Returns false (with a diagnostic)
    /// when the column has no variance and was dropped.
    pub fn append_dense(&mut self, values: &[f64], penalized: bool, name: &str) -> Result<bool> {
        let n = self.n_rows();
        if values.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "dense column {name:?} has {} values for {} rows",
                values.len(),
                n
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("dense column {name:?}")));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std <= 1e-12 {
            self.diagnostics
                .push(format!("dropped constant column {name:?}"));
            return Ok(false);
        }
        if self.n_dense == 0 {
            self.dense = Vec::with_capacity(n);
            for &v in values {
                self.dense.push((v - mean) / std);
            }
            self.n_dense = 1;
        } else {
            // Re-pack row-major with the new column on the right.
            let old = std::mem::take(&mut self.dense);
            let w = self.n_dense;
            let mut packed = Vec::with_capacity(n * (w + 1));
            for i in 0..n {
                packed.extend_from_slice(&old[i * w..(i + 1) * w]);
                packed.push((values[i] - mean) / std);
            }
            self.dense = packed;
            self.n_dense += 1;
        }
        self.scaling.push(ColumnScale {
            column: self.n_sparse + self.n_dense - 1,
            mean,
            std,
        });
        self.penalized.push(penalized);
        Ok(true)
    }

    pub(crate) fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        let n = self.n_rows();
        let mut out = vec![b; n];
        for (i, row) in self.sparse.iter().enumerate() {
            let mut acc = 0.0;
            for &j in *row {
                acc += w[j as usize];
            }
            out[i] += acc;
        }
        if self.n_dense > 0 {
            let wd = &w[self.n_sparse..];
            for i in 0..n {
                let row = &self.dense[i * self.n_dense..(i + 1) * self.n_dense];
                let mut acc = 0.0;
                for (x, &wj) in row.iter().zip(wd) {
                    acc += x * wj;
                }
                out[i] += acc;
            }
        }
        out
    }

    /// Xᵀr without the 1/n factor, in a fixed accumulation order.
    pub(crate) fn transpose_apply(&self, r: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_cols()];
        for (i, row) in self.sparse.iter().enumerate() {
            let ri = r[i];
            for &j in *row {
                g[j as usize] += ri;
            }
        }
        if self.n_dense > 0 {
            for i in 0..self.n_rows() {
                let ri = r[i];
                let row = &self.dense[i * self.n_dense..(i + 1) * self.n_dense];
                for (m, x) in row.iter().enumerate() {
                    g[self.n_sparse + m] += ri * x;
                }
            }
        }
        g
    }
}

/// Design over the view's sub-signature columns alone.
pub fn independent_design<'a>(view: &DatasetView<'a>) -> DesignMatrix<'a> {
    let rows = (0..view.n_rows()).map(|i| view.sparse_row(i)).collect();
    DesignMatrix::from_sparse(rows, view.n_sparse_cols())
}

/// Appends the baseline model's per-sample probability as one standardized
/// column. The column is unpenalized by default so strong regularization
/// cannot discard the baseline; `penalize_baseline` restores the uniform
/// penalty. A constant baseline is dropped and the design degrades to the
/// independent mode with a diagnostic.
pub fn prepare_conditional<'a>(
    view: &DatasetView<'a>,
    baseline_probs: &[f64],
    penalize_baseline: bool,
) -> Result<DesignMatrix<'a>> {
    if baseline_probs.len() != view.n_rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} baseline probabilities for {} rows",
            baseline_probs.len(),
            view.n_rows()
        )));
    }
    if baseline_probs
        .iter()
        .any(|p| !p.is_finite() || !(0.0..=1.0).contains(p))
    {
        return Err(Error::Validation(
            "baseline probabilities must lie in [0, 1]".into(),
        ));
    }
    let mut design = independent_design(view);
    let kept = design.append_dense(baseline_probs, penalize_baseline, "baseline_prob")?;
    design.mode = if kept {
        SelectionMode::Conditional
    } else {
        SelectionMode::Independent
    };
    Ok(design)
}

/// Appends every side column, standardized, all penalized. An absent or
/// empty side table yields a design identical to the independent mode.
pub fn prepare_stacked<'a>(view: &DatasetView<'a>) -> Result<DesignMatrix<'a>> {
    let mut design = independent_design(view);
    design.mode = SelectionMode::Stacked;
    let names: Vec<String> = view.side_names().to_vec();
    for (m, name) in names.iter().enumerate() {
        let col: Vec<f64> = (0..view.n_rows())
            .map(|i| view.side_row(i).map_or(0.0, |r| r[m]))
            .collect();
        design.append_dense(&col, true, name)?;
    }
    Ok(design)
}

/// One fitted L1 model. `weights` holds only non-zero coordinates, column
/// index ascending; columns at `n_signature_cols` and beyond are appended
/// dense columns, never selectable sub-signatures.
#[derive(Clone, Debug)]
pub struct SelectionModel {
    pub mode: SelectionMode,
    pub lambda: f64,
    pub weights: Vec<(u32, f64)>,
    pub intercept: f64,
    pub penalized_mask: Vec<bool>,
    pub column_scaling: Vec<ColumnScale>,
    pub objective_trace: Vec<f64>,
    pub n_signature_cols: usize,
    pub converged: bool,
}

impl SelectionModel {
    pub fn dense_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.penalized_mask.len()];
        for &(j, v) in &self.weights {
            w[j as usize] = v;
        }
        w
    }

    /// Non-zero count over sub-signature columns only.
    pub fn nnz_signatures(&self) -> usize {
        self.weights
            .iter()
            .filter(|&&(j, _)| (j as usize) < self.n_signature_cols)
            .count()
    }
}

/// Composite objective value and smooth-part gradient (weights, intercept)
/// at the given point.
pub fn logistic_objective(
    design: &DesignMatrix,
    labels: &[u8],
    weights: &[f64],
    intercept: f64,
    lambda: f64,
) -> Result<(f64, Vec<f64>, f64)> {
    let problem = Problem::new(design, labels)?;
    if weights.len() != design.n_cols() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} columns",
            weights.len(),
            design.n_cols()
        )));
    }
    let margins = problem.margins(weights, intercept);
    let smooth = problem.smooth_value(&margins);
    let penalty: f64 = weights
        .iter()
        .enumerate()
        .filter(|&(j, _)| design.is_penalized(j))
        .map(|(_, w)| w.abs())
        .sum();
    let (grad, grad_b) = problem.smooth_grad(&margins);
    Ok((smooth + lambda * penalty, grad, grad_b))
}

fn build_model(design: &DesignMatrix, lambda: f64, r: solver::FitResult) -> SelectionModel {
    let weights: Vec<(u32, f64)> = r
        .w
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v != 0.0)
        .map(|(j, &v)| (j as u32, v))
        .collect();
    SelectionModel {
        mode: design.mode,
        lambda,
        weights,
        intercept: r.b,
        penalized_mask: design.penalized_mask().to_vec(),
        column_scaling: design.scaling().to_vec(),
        objective_trace: r.trace,
        n_signature_cols: design.n_signature_cols(),
        converged: r.converged,
    }
}

pub fn fit_lasso(design: &DesignMatrix, labels: &[u8], lambda: f64) -> Result<SelectionModel> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Validation(format!(
            "lambda must be finite and non-negative, got {lambda}"
        )));
    }
    let problem = Problem::new(design, labels)?;
    // At or above the all-zero threshold the optimum is the null model, so
    // solve the frozen-penalized problem and return it exactly.
    let (threshold, _, _) = null_model(&problem)?;
    let mut opts = FitOptions::for_lambda(lambda);
    if lambda >= threshold {
        opts.freeze_penalized = true;
    }
    let r = fit(&problem, opts)?;
    Ok(build_model(design, lambda, r))
}

/// Largest gradient-based KKT violation of the model on this data: for
/// penalized zero weights the slack of |g_j| ≤ λ, for penalized non-zeros
/// the distance of g_j from -λ·sign(w_j), and for unpenalized coordinates
/// and the intercept the raw |g|.
pub fn kkt_violation(design: &DesignMatrix, labels: &[u8], model: &SelectionModel) -> Result<f64> {
    let problem = Problem::new(design, labels)?;
    let w = model.dense_weights();
    let margins = problem.margins(&w, model.intercept);
    let (grad, grad_b) = problem.smooth_grad(&margins);
    let mut worst = grad_b.abs();
    for (j, (&g, &wj)) in grad.iter().zip(&w).enumerate() {
        let v = if !design.is_penalized(j) {
            g.abs()
        } else if wj == 0.0 {
            (g.abs() - model.lambda).max(0.0)
        } else {
            (g + model.lambda * wj.signum()).abs()
        };
        worst = worst.max(v);
    }
    Ok(worst)
}

/// The smallest λ at which every penalized weight is zero, via the
/// unpenalized submodel's gradient.
pub fn lambda_max(design: &DesignMatrix, labels: &[u8]) -> Result<f64> {
    let problem = Problem::new(design, labels)?;
    Ok(null_model(&problem)?.0)
}

#[derive(Clone, Debug)]
pub struct LassoPath {
    pub lambda_max: f64,
    pub models: Vec<SelectionModel>,
}

impl LassoPath {
    /// The grid model whose sub-signature non-zero count is closest to `k`;
    /// ties go to the sparser (larger λ) model.
    pub fn pick(&self, k: usize) -> &SelectionModel {
        let mut best = 0usize;
        let mut best_gap = usize::MAX;
        for (i, m) in self.models.iter().enumerate() {
            let gap = m.nnz_signatures().abs_diff(k);
            if gap < best_gap {
                best_gap = gap;
                best = i;
            }
        }
        &self.models[best]
    }
}

/// Fits a geometric grid of [`LAMBDA_GRID_SIZE`] λ values from λ_max down
/// to λ_max·[`LAMBDA_FLOOR_RATIO`], warm-starting each fit from the
/// previous solution. Grid order is decreasing λ, so [`LassoPath::pick`]'s
/// first-wins tie rule prefers the sparser model.
pub fn lambda_path(design: &DesignMatrix, labels: &[u8]) -> Result<LassoPath> {
    let problem = Problem::new(design, labels)?;
    // Validate the class balance up front so the error is uniform.
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    let (lmax, w0, b0) = null_model(&problem)?;
    if lmax <= 0.0 {
        return Err(Error::Degenerate(
            "every penalized column has zero gradient at the null model".into(),
        ));
    }
    let mut models = Vec::with_capacity(LAMBDA_GRID_SIZE);
    let mut warm_w = w0;
    let mut warm_b = b0;
    for i in 0..LAMBDA_GRID_SIZE {
        let frac = i as f64 / (LAMBDA_GRID_SIZE - 1) as f64;
        let lambda = lmax * LAMBDA_FLOOR_RATIO.powf(frac);
        let mut opts = FitOptions::for_lambda(lambda);
        opts.warm_w = Some(warm_w.clone());
        opts.warm_b = Some(warm_b);
        let r = fit(&problem, opts)?;
        warm_w = r.w.clone();
        warm_b = r.b;
        models.push(build_model(design, lambda, r));
    }
    Ok(LassoPath {
        lambda_max: lmax,
        models,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelectedFeatureSet {
    pub k: usize,
    /// Catalog ids of the chosen sub-signatures, |weight| descending.
    pub feature_ids: Vec<u64>,
    pub lambda_used: f64,
    /// Set when the model had fewer non-zero sub-signature weights than
    /// requested.
    pub shortfall: Option<usize>,
}

/// Ranks the model's non-zero sub-signature weights by magnitude (ties to
/// the smaller column index) and returns the top `k` as catalog ids.
/// Appended baseline/side columns are never included.
pub fn select_top_k(model: &SelectionModel, k: usize, catalog_ids: &[u64]) -> SelectedFeatureSet {
    let mut ranked: Vec<(u32, f64)> = model
        .weights
        .iter()
        .filter(|&&(j, _)| (j as usize) < model.n_signature_cols)
        .copied()
        .collect();
    ranked.sort_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    let available = ranked.len();
    ranked.truncate(k);
    SelectedFeatureSet {
        k,
        feature_ids: ranked
            .iter()
            .map(|&(j, _)| catalog_ids[j as usize])
            .collect(),
        lambda_used: model.lambda,
        shortfall: (available < k).then_some(available),
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    mode: SelectionMode,
    lambda: f64,
    intercept: f64,
    weights: Vec<(u32, f64)>,
    column_scaling: Vec<ColumnScale>,
    /// Catalog ids for the sub-signature block, 16-hex.
    feature_ids: Vec<String>,
    n_signature_cols: usize,
    unpenalized_cols: Vec<u32>,
    converged: bool,
}

pub fn save_selection_model(
    model: &SelectionModel,
    catalog_ids: &[u64],
    path: &Path,
) -> Result<()> {
    let file = ModelFile {
        format: LINEAR_FORMAT.into(),
        version: LINEAR_VERSION,
        mode: model.mode,
        lambda: model.lambda,
        intercept: model.intercept,
        weights: model.weights.clone(),
        column_scaling: model.column_scaling.clone(),
        feature_ids: catalog_ids.iter().map(|id| format!("{id:016x}")).collect(),
        n_signature_cols: model.n_signature_cols,
        unpenalized_cols: model
            .penalized_mask
            .iter()
            .enumerate()
            .filter(|&(_, &p)| !p)
            .map(|(j, _)| j as u32)
            .collect(),
        converged: model.converged,
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::ModelFormat(format!("serialize: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub struct LoadedSelectionModel {
    pub model: SelectionModel,
    pub feature_ids: Vec<u64>,
}

pub fn load_selection_model(path: &Path) -> Result<LoadedSelectionModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| Error::ModelFormat(format!("parse: {e}")))?;
    if file.format != LINEAR_FORMAT {
        return Err(Error::ModelFormat(format!(
            "expected format {LINEAR_FORMAT:?}, found {:?}",
            file.format
        )));
    }
    if file.version != LINEAR_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported version {}",
            file.version
        )));
    }
    let mut feature_ids = Vec::with_capacity(file.feature_ids.len());
    for s in &file.feature_ids {
        if s.len() != 16 {
            return Err(Error::ModelFormat(format!("bad feature id {s:?}")));
        }
        let id = u64::from_str_radix(s, 16)
            .map_err(|_| Error::ModelFormat(format!("bad feature id {s:?}")))?;
        feature_ids.push(id);
    }
    let total = file.n_signature_cols
        + file
            .column_scaling
            .len();
    let mut penalized_mask = vec![true; total];
    for &j in &file.unpenalized_cols {
        let j = j as usize;
        if j >= total {
            return Err(Error::ModelFormat(format!(
                "unpenalized column {j} out of range"
            )));
        }
        penalized_mask[j] = false;
    }
    for &(j, v) in &file.weights {
        if j as usize >= total || !v.is_finite() {
            return Err(Error::ModelFormat(format!("bad weight entry ({j}, {v})")));
        }
    }
    Ok(LoadedSelectionModel {
        model: SelectionModel {
            mode: file.mode,
            lambda: file.lambda,
            weights: file.weights,
            intercept: file.intercept,
            penalized_mask,
            column_scaling: file.column_scaling,
            objective_trace: Vec::new(),
            n_signature_cols: file.n_signature_cols,
            converged: file.converged,
        },
        feature_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn owned_design(rows: &[Vec<u32>], n_cols: usize) -> DesignMatrix<'_> {
        DesignMatrix::from_sparse(rows.iter().map(|r| r.as_slice()).collect(), n_cols)
    }

    /// Two-column instance: column 0 tracks the label closely, column 1 is
    /// noise, plus a block where neither fires.
    fn toy(n_per_cell: usize, seed: u64) -> (Vec<Vec<u32>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n_per_cell * 4 {
            let y = rng.gen_bool(0.5) as u8;
            let mut row = Vec::new();
            let p0 = if y == 1 { 0.9 } else { 0.1 };
            if rng.gen_bool(p0) {
                row.push(0);
            }
            if rng.gen_bool(0.4) {
                row.push(1);
            }
            rows.push(row);
            labels.push(y);
        }
        (rows, labels)
    }

    #[test]
    fn objective_at_zero_is_ln_two_on_balanced_labels() {
        let rows = vec![vec![0u32], vec![], vec![0], vec![]];
        let labels = [1u8, 0, 1, 0];
        let design = owned_design(&rows, 1);
        let (value, _, gb) =
            logistic_objective(&design, &labels, &[0.0], 0.0, 0.0).unwrap();
        assert!((value - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(gb.abs() < 1e-12);
    }

    #[test]
    fn single_sample_gradient_is_half() {
        let rows = vec![vec![0u32], vec![]];
        let labels = [1u8, 0];
        let design = owned_design(&rows, 1);
        let (_, grad, _) = logistic_objective(&design, &labels, &[0.0], 0.0, 0.0).unwrap();
        // (σ(0) - 1)·1 averaged over two rows, only one of which fires.
        assert!((grad[0] - (-0.25)).abs() < 1e-12);
    }

    #[test]
    fn lambda_at_or_above_max_gives_null_model() {
        let (rows, labels) = toy(20, 7);
        let design = owned_design(&rows, 2);
        let lmax = lambda_max(&design, &labels).unwrap();
        assert!(lmax > 0.0);
        for lambda in [lmax, lmax * 1.5] {
            let m = fit_lasso(&design, &labels, lambda).unwrap();
            assert_eq!(m.weights.len(), 0, "lambda {lambda}");
        }
        let below = fit_lasso(&design, &labels, lmax * 0.5).unwrap();
        assert!(!below.weights.is_empty());
    }

    #[test]
    fn constant_zero_column_never_enters() {
        let (rows, labels) = toy(20, 11);
        // Column 2 exists in the design but never fires.
        let design = owned_design(&rows, 3);
        for lambda in [1e-1, 1e-2, 1e-3] {
            let m = fit_lasso(&design, &labels, lambda).unwrap();
            assert!(m.weights.iter().all(|&(j, _)| j != 2), "lambda {lambda}");
        }
    }

    #[test]
    fn trace_is_non_increasing_and_kkt_holds() {
        let (rows, labels) = toy(30, 3);
        let design = owned_design(&rows, 2);
        let m = fit_lasso(&design, &labels, 0.02).unwrap();
        assert!(m.converged);
        for pair in m.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "{} -> {}", pair[0], pair[1]);
        }
        let v = kkt_violation(&design, &labels, &m).unwrap();
        assert!(v <= 1e-4, "kkt violation {v}");
    }

    #[test]
    fn single_class_labels_are_rejected() {
        let rows = vec![vec![0u32], vec![]];
        let design = owned_design(&rows, 1);
        assert!(matches!(
            fit_lasso(&design, &[1, 1], 0.1),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn path_finds_single_dominant_feature() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..120 {
            let y = rng.gen_bool(0.5) as u8;
            let mut row = Vec::new();
            if (y == 1) == rng.gen_bool(0.95) {
                row.push(0u32);
            }
            for j in 1..5u32 {
                if rng.gen_bool(0.3) {
                    row.push(j);
                }
            }
            rows.push(row);
            labels.push(y);
        }
        let design = owned_design(&rows, 5);
        let path = lambda_path(&design, &labels).unwrap();
        assert_eq!(path.models.len(), LAMBDA_GRID_SIZE);
        let pick = path.pick(1);
        assert_eq!(pick.nnz_signatures(), 1);
        let ids: Vec<u64> = (10..15).collect();
        let set = select_top_k(pick, 1, &ids);
        assert_eq!(set.feature_ids, vec![10]);
        assert!(set.shortfall.is_none());
        // Densest grid model is the floor pick for a huge target.
        let dense_pick = path.pick(500);
        let max_nnz = path.models.iter().map(|m| m.nnz_signatures()).max().unwrap();
        assert_eq!(dense_pick.nnz_signatures(), max_nnz);
    }

    #[test]
    fn conditional_constant_baseline_degrades_with_diagnostic() {
        let (rows, _) = toy(10, 2);
        let probs = vec![0.4; rows.len()];
        let mut d = owned_design(&rows, 2);
        let kept = d.append_dense(&probs, false, "baseline_prob").unwrap();
        assert!(!kept);
        assert_eq!(d.n_cols(), 2);
        assert_eq!(d.diagnostics.len(), 1);
        assert!(d.diagnostics[0].contains("baseline_prob"));
    }

    #[test]
    fn unpenalized_baseline_survives_huge_lambda_but_penalized_does_not() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut probs = Vec::new();
        for _ in 0..200 {
            let y = rng.gen_bool(0.5) as u8;
            let mut row = Vec::new();
            if rng.gen_bool(if y == 1 { 0.7 } else { 0.3 }) {
                row.push(0u32);
            }
            rows.push(row);
            labels.push(y);
            // Informative but overlapping, so the unpenalized submodel has
            // a finite optimum.
            let noise: f64 = rng.gen_range(-0.25..0.25);
            probs.push((0.35 + 0.3 * y as f64 + noise).clamp(0.0, 1.0));
        }
        let refs: Vec<&[u32]> = rows.iter().map(|r| r.as_slice()).collect();
        let mut unpen = DesignMatrix::from_sparse(refs.clone(), 1);
        assert!(unpen.append_dense(&probs, false, "baseline_prob").unwrap());
        let big = lambda_max(&unpen, &labels).unwrap() * 4.0;
        let m = fit_lasso(&unpen, &labels, big).unwrap();
        // The baseline column keeps weight; everything penalized is zero.
        assert!(m.weights.iter().any(|&(j, _)| j == 1));
        assert!(m.weights.iter().all(|&(j, _)| j == 1));

        let mut pen = DesignMatrix::from_sparse(refs, 1);
        assert!(pen.append_dense(&probs, true, "baseline_prob").unwrap());
        let lmax = lambda_max(&pen, &labels).unwrap();
        let null = fit_lasso(&pen, &labels, lmax * 2.0).unwrap();
        assert!(null.weights.is_empty());
    }

    #[test]
    fn duplicated_column_keeps_at_most_one_copy_near_lambda_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut dup = Vec::new();
        for _ in 0..160 {
            let y = rng.gen_bool(0.5) as u8;
            let fires = rng.gen_bool(if y == 1 { 0.8 } else { 0.2 });
            rows.push(if fires { vec![0u32] } else { vec![] });
            dup.push(fires as u8 as f64);
            labels.push(y);
        }
        let refs: Vec<&[u32]> = rows.iter().map(|r| r.as_slice()).collect();
        let mut d = DesignMatrix::from_sparse(refs, 1);
        assert!(d.append_dense(&dup, true, "copy").unwrap());
        let lmax = lambda_max(&d, &labels).unwrap();
        let m = fit_lasso(&d, &labels, lmax * 0.95).unwrap();
        assert!(m.weights.len() <= 1, "weights: {:?}", m.weights);
    }

    #[test]
    fn top_k_ranks_by_magnitude_with_index_ties() {
        let model = SelectionModel {
            mode: SelectionMode::Independent,
            lambda: 0.1,
            weights: vec![(0, 0.5), (2, -0.9), (4, 0.5), (7, 0.1)],
            intercept: 0.0,
            penalized_mask: vec![true; 8],
            column_scaling: vec![],
            objective_trace: vec![],
            n_signature_cols: 8,
            converged: true,
        };
        let ids: Vec<u64> = (100..108).collect();
        let set = select_top_k(&model, 2, &ids);
        assert_eq!(set.feature_ids, vec![102, 100]);
        let set3 = select_top_k(&model, 3, &ids);
        assert_eq!(set3.feature_ids, vec![102, 100, 104]);
        let short = select_top_k(&model, 10, &ids);
        assert_eq!(short.feature_ids.len(), 4);
        assert_eq!(short.shortfall, Some(4));
    }

    #[test]
    fn appended_columns_are_never_selected() {
        let model = SelectionModel {
            mode: SelectionMode::Conditional,
            lambda: 0.1,
            weights: vec![(0, 0.2), (3, 5.0)],
            intercept: 0.0,
            penalized_mask: vec![true, true, true, false],
            column_scaling: vec![ColumnScale {
                column: 3,
                mean: 0.5,
                std: 0.2,
            }],
            objective_trace: vec![],
            n_signature_cols: 3,
            converged: true,
        };
        let ids: Vec<u64> = vec![7, 8, 9];
        let set = select_top_k(&model, 2, &ids);
        assert_eq!(set.feature_ids, vec![7]);
        assert_eq!(set.shortfall, Some(1));
    }

    #[test]
    fn model_file_round_trips() {
        let (rows, labels) = toy(15, 21);
        let design = owned_design(&rows, 2);
        let m = fit_lasso(&design, &labels, 0.02).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_selection_model(&m, &[0xABCD, 0x1234], &path).unwrap();
        let loaded = load_selection_model(&path).unwrap();
        assert_eq!(loaded.model.weights, m.weights);
        assert_eq!(loaded.model.intercept, m.intercept);
        assert_eq!(loaded.model.lambda, m.lambda);
        assert_eq!(loaded.feature_ids, vec![0xABCD, 0x1234]);
        assert_eq!(loaded.model.penalized_mask, m.penalized_mask);
    }

    #[test]
    fn mode_containment_on_one_fixture() {
        let (rows, labels) = toy(25, 17);
        let refs: Vec<&[u32]> = rows.iter().map(|r| r.as_slice()).collect();
        let independent = DesignMatrix::from_sparse(refs.clone(), 2);

        // Stacked with no side columns.
        let stacked = {
            let mut d = DesignMatrix::from_sparse(refs.clone(), 2);
            d.mode = SelectionMode::Stacked;
            d
        };
        let lambda = lambda_max(&independent, &labels).unwrap() * 0.2;
        let mi = fit_lasso(&independent, &labels, lambda).unwrap();
        let ms = fit_lasso(&stacked, &labels, lambda).unwrap();
        assert_eq!(mi.weights, ms.weights);
        assert!((mi.intercept - ms.intercept).abs() < 1e-9);

        // Conditional with a constant baseline degrades to independent.
        let mut degraded = DesignMatrix::from_sparse(refs, 2);
        let kept = degraded
            .append_dense(&vec![0.3; rows.len()], false, "baseline_prob")
            .unwrap();
        assert!(!kept);
        let md = fit_lasso(&degraded, &labels, lambda).unwrap();
        assert_eq!(mi.weights, md.weights);
    }

    #[test]
    fn warm_path_counts_are_mostly_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let d = 12u32;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..240 {
            let y = rng.gen_bool(0.5) as u8;
            let mut row = Vec::new();
            for j in 0..d {
                let lift = 0.08 * (j as f64 + 1.0) / d as f64;
                let p = if y == 1 { 0.25 + lift } else { 0.25 - lift };
                if rng.gen_bool(p) {
                    row.push(j);
                }
            }
            rows.push(row);
            labels.push(y);
        }
        let design = owned_design(&rows, d as usize);
        let path = lambda_path(&design, &labels).unwrap();
        let counts: Vec<usize> = path.models.iter().map(|m| m.nnz_signatures()).collect();
        let adjacent = counts.len() - 1;
        let ok = counts
            .windows(2)
            .filter(|pair| pair[1] >= pair[0])
            .count();
        assert!(
            ok * 100 >= adjacent * 95,
            "non-monotone path: {counts:?}"
        );
        assert_eq!(counts[0], 0);
    }

    #[test]
    fn mode_tokens_round_trip() {
        for m in [
            SelectionMode::Independent,
            SelectionMode::Conditional,
            SelectionMode::Stacked,
        ] {
            assert_eq!(SelectionMode::from_token(m.as_str()), Some(m));
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let (rows, labels) = toy(25, 29);
        let design = owned_design(&rows, 2);
        let a = fit_lasso(&design, &labels, 0.01).unwrap();
        let b = fit_lasso(&design, &labels, 0.01).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.intercept.to_bits(), b.intercept.to_bits());
    }

    fn dict_order(map: &BTreeMap<u32, f64>) -> Vec<u32> {
        map.keys().copied().collect()
    }

    #[test]
    fn weights_are_sorted_by_column() {
        let (rows, labels) = toy(20, 41);
        let design = owned_design(&rows, 2);
        let m = fit_lasso(&design, &labels, 0.005).unwrap();
        let map: BTreeMap<u32, f64> = m.weights.iter().copied().collect();
        let cols: Vec<u32> = m.weights.iter().map(|&(j, _)| j).collect();
        assert_eq!(cols, dict_order(&map));
    }
}
