//! Second-order gradient-boosted trees with logistic loss, plus the
//! unpenalized linear learner used for model comparisons.
//!
//! Each round fits one depth-limited tree to the current gradient
//! g_i = p_i - y_i and hessian h_i = p_i(1 - p_i), choosing splits that
//! maximize ½[G_L²/(H_L+λ) + G_R²/(H_R+λ) - G²/(H+λ)] over histogram bins,
//! with leaves valued -G/(H+λ). Margins accumulate learning_rate · leaf on
//! top of a base margin at the log-odds of train prevalence. Continuous
//! columns are binned at training-quantile midpoints; a column with at most
//! n_bins distinct training values keeps every distinct value as its own
//! bin, so binary columns naturally split at 0.5.

mod frame;
mod linear;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, with_pool, Execution};
use crate::selection::solver::{log_odds, sigmoid, PROB_CLAMP};

pub use frame::{combined_frame, side_frame, yara_frame, FeatureFrame};
pub use linear::{fit_linear_unpenalized, load_linear, save_linear, LinearModel};

pub const GBDT_FORMAT: &str = "hayama-gbdt";
pub const GBDT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_child_hessian: f64,
    pub l2_leaf: f64,
    pub n_bins: usize,
    pub seed: u64,
    pub row_subsample: f64,
    pub col_subsample: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_trees: 200,
            max_depth: 6,
            learning_rate: 0.1,
            min_child_hessian: 1.0,
            l2_leaf: 1.0,
            n_bins: 256,
            seed: 0,
            row_subsample: 1.0,
            col_subsample: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 {
            return Err(Error::Validation(
                "n_trees and max_depth must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Validation(format!(
                "learning_rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.min_child_hessian < 0.0 || self.l2_leaf < 0.0 {
            return Err(Error::Validation(
                "min_child_hessian and l2_leaf must be non-negative".into(),
            ));
        }
        if self.n_bins < 2 || self.n_bins > 65_536 {
            return Err(Error::Validation(format!(
                "n_bins must be in [2, 65536], got {}",
                self.n_bins
            )));
        }
        for (name, v) in [
            ("row_subsample", self.row_subsample),
            ("col_subsample", self.col_subsample),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Validation(format!(
                    "{name} must be in (0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature as usize] < *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub yara_ids: Vec<u64>,
    pub side_names: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct BoostedEnsemble {
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    pub base_margin: f64,
    pub config: TrainConfig,
    /// Accumulated split gain per column.
    pub feature_gain: Vec<f64>,
    /// Mean train log-loss before any tree, then after each round.
    pub loss_trace: Vec<f64>,
    pub n_cols: usize,
    pub feature_space: FeatureSpace,
}

impl BoostedEnsemble {
    pub fn predict_margin(&self, row: &[f64]) -> f64 {
        let mut m = self.base_margin;
        for t in &self.trees {
            m += self.learning_rate * t.predict(row);
        }
        m
    }
}

/// Per-column split thresholds; bin(x) = number of thresholds ≤ x.
struct Binning {
    thresholds: Vec<Vec<f64>>,
}

impl Binning {
    fn build(frame: &FeatureFrame, n_bins: usize) -> Self {
        let thresholds = (0..frame.n_cols)
            .map(|c| {
                let mut sorted = frame.column(c);
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                column_thresholds(&sorted, n_bins)
            })
            .collect();
        Binning { thresholds }
    }

    /// Per-row bin index for one column.
    fn assign(&self, frame: &FeatureFrame, c: usize) -> Vec<u32> {
        let t = &self.thresholds[c];
        (0..frame.n_rows)
            .map(|i| t.partition_point(|&x| x <= frame.get(i, c)) as u32)
            .collect()
    }
}

/// Split thresholds for one sorted column: midpoints between adjacent
/// distinct values, thinned to quantile cut points when there are more
/// than n_bins distinct values.
fn column_thresholds(sorted: &[f64], n_bins: usize) -> Vec<f64> {
    let mut distinct: Vec<f64> = Vec::new();
    for &v in sorted {
        if distinct.last() != Some(&v) {
            distinct.push(v);
        }
    }
    if distinct.len() <= 1 {
        return Vec::new();
    }
    if distinct.len() <= n_bins {
        return distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    let n = sorted.len();
    let mut cuts: Vec<f64> = Vec::new();
    for b in 1..n_bins {
        let v = sorted[b * (n - 1) / n_bins];
        if cuts.last() != Some(&v) {
            cuts.push(v);
        }
    }
    // Turn cut values into midpoints with the next distinct value above.
    let mut out = Vec::with_capacity(cuts.len());
    for v in cuts {
        let i = distinct.partition_point(|&x| x <= v);
        if i < distinct.len() {
            out.push(0.5 * (v + distinct[i]));
        }
    }
    out.dedup();
    out
}

#[derive(Clone, Copy)]
struct SplitChoice {
    gain: f64,
    feature: u32,
    bin: u32,
    threshold: f64,
}

struct Grower {
    bins: Vec<Vec<u32>>,
    n_bin_count: Vec<usize>,
    thresholds: Vec<Vec<f64>>,
    cfg: TrainConfig,
    exec: Execution,
}

impl Grower {
    /// Best split of one column over the node's rows, or None.
    fn column_best(
        &self,
        c: usize,
        rows: &[u32],
        grad: &[f64],
        hess: &[f64],
        g_total: f64,
        h_total: f64,
    ) -> Option<SplitChoice> {
        let n_bins = self.n_bin_count[c];
        if n_bins < 2 {
            return None;
        }
        let mut hist_g = vec![0.0f64; n_bins];
        let mut hist_h = vec![0.0f64; n_bins];
        let assignment = &self.bins[c];
        for &r in rows {
            let b = assignment[r as usize] as usize;
            hist_g[b] += grad[r as usize];
            hist_h[b] += hess[r as usize];
        }
        let l2 = self.cfg.l2_leaf;
        let parent = g_total * g_total / (h_total + l2);
        let mut best: Option<SplitChoice> = None;
        let mut gl = 0.0;
        let mut hl = 0.0;
        for j in 0..n_bins - 1 {
            gl += hist_g[j];
            hl += hist_h[j];
            let gr = g_total - gl;
            let hr = h_total - hl;
            if hl < self.cfg.min_child_hessian || hr < self.cfg.min_child_hessian {
                continue;
            }
            let gain = 0.5 * (gl * gl / (hl + l2) + gr * gr / (hr + l2) - parent);
            if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitChoice {
                    gain,
                    feature: c as u32,
                    bin: j as u32,
                    threshold: self.thresholds[c][j],
                });
            }
        }
        best
    }

    fn best_split(
        &self,
        rows: &[u32],
        cols: &[u32],
        grad: &[f64],
        hess: &[f64],
        g_total: f64,
        h_total: f64,
    ) -> Option<SplitChoice> {
        let candidates: Vec<Option<SplitChoice>> = map_indexed(self.exec, cols.len(), |ci| {
            self.column_best(cols[ci] as usize, rows, grad, hess, g_total, h_total)
        });
        let mut best: Option<SplitChoice> = None;
        for cand in candidates.into_iter().flatten() {
            best = Some(match best {
                None => cand,
                Some(b) => {
                    if cand.gain > b.gain
                        || (cand.gain == b.gain
                            && (cand.feature, cand.bin) < (b.feature, b.bin))
                    {
                        cand
                    } else {
                        b
                    }
                }
            });
        }
        best
    }

    fn grow(
        &self,
        rows: Vec<u32>,
        cols: &[u32],
        grad: &[f64],
        hess: &[f64],
        gain_out: &mut [f64],
    ) -> Tree {
        let mut tree = Tree::default();
        // Queue of (node index, rows, depth); nodes are allocated in BFS
        // order so the layout is deterministic.
        tree.nodes.push(TreeNode::Leaf { value: 0.0 });
        let mut queue = std::collections::VecDeque::new();
        queue.push_back((0usize, rows, 0usize));
        while let Some((at, rows, depth)) = queue.pop_front() {
            let mut g_total = 0.0;
            let mut h_total = 0.0;
            for &r in &rows {
                g_total += grad[r as usize];
                h_total += hess[r as usize];
            }
            let leaf_value = -g_total / (h_total + self.cfg.l2_leaf);
            let choice = if depth < self.cfg.max_depth {
                self.best_split(&rows, cols, grad, hess, g_total, h_total)
            } else {
                None
            };
            match choice {
                None => tree.nodes[at] = TreeNode::Leaf { value: leaf_value },
                Some(s) => {
                    let assignment = &self.bins[s.feature as usize];
                    let mut left_rows = Vec::new();
                    let mut right_rows = Vec::new();
                    for &r in &rows {
                        if assignment[r as usize] <= s.bin {
                            left_rows.push(r);
                        } else {
                            right_rows.push(r);
                        }
                    }
                    let left = tree.nodes.len() as u32;
                    tree.nodes.push(TreeNode::Leaf { value: 0.0 });
                    let right = tree.nodes.len() as u32;
                    tree.nodes.push(TreeNode::Leaf { value: 0.0 });
                    tree.nodes[at] = TreeNode::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left,
                        right,
                    };
                    gain_out[s.feature as usize] += s.gain;
                    queue.push_back((left as usize, left_rows, depth + 1));
                    queue.push_back((right as usize, right_rows, depth + 1));
                }
            }
        }
        tree
    }
}

fn mean_log_loss(margins: &[f64], labels: &[u8]) -> f64 {
    let mut total = 0.0;
    for (&m, &y) in margins.iter().zip(labels) {
        let p = sigmoid(m).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        total -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    total / labels.len() as f64
}

fn subsample(rng: &mut impl rand::Rng, n: usize, frac: f64) -> Vec<u32> {
    if frac >= 1.0 {
        return (0..n as u32).collect();
    }
    let keep = ((n as f64 * frac).ceil() as usize).clamp(1, n);
    let mut idx: Vec<u32> = (0..n as u32).collect();
    for i in 0..keep {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    let mut chosen = idx[..keep].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Fits a boosted ensemble on the frame. Histogram scans parallelize across
/// columns; all reductions are order-fixed, so the model is identical for
/// any worker count.
pub fn fit_gbdt(
    frame: &FeatureFrame,
    labels: &[u8],
    config: &TrainConfig,
    exec: Execution,
) -> Result<BoostedEnsemble> {
    config.validate()?;
    frame.check_finite()?;
    if labels.len() != frame.n_rows {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            frame.n_rows
        )));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }

    with_pool(exec, || {
        use rand::SeedableRng;
        let n = frame.n_rows;
        let binning = Binning::build(frame, config.n_bins);
        let bins: Vec<Vec<u32>> = (0..frame.n_cols).map(|c| binning.assign(frame, c)).collect();
        let n_bin_count: Vec<usize> = binning.thresholds.iter().map(|t| t.len() + 1).collect();
        let grower = Grower {
            bins,
            n_bin_count,
            thresholds: binning.thresholds,
            cfg: config.clone(),
            exec,
        };

        let prevalence = pos as f64 / n as f64;
        let base_margin = log_odds(prevalence);
        let mut margins = vec![base_margin; n];
        let mut trees = Vec::with_capacity(config.n_trees);
        let mut feature_gain = vec![0.0; frame.n_cols];
        let mut loss_trace = Vec::with_capacity(config.n_trees + 1);
        loss_trace.push(mean_log_loss(&margins, labels));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);

        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for _ in 0..config.n_trees {
            for i in 0..n {
                let p = sigmoid(margins[i]);
                grad[i] = p - labels[i] as f64;
                hess[i] = (p * (1.0 - p)).max(1e-16);
            }
            let rows = subsample(&mut rng, n, config.row_subsample);
            let cols = subsample(&mut rng, frame.n_cols, config.col_subsample);
            let tree = grower.grow(rows, &cols, &grad, &hess, &mut feature_gain);
            for i in 0..n {
                margins[i] += config.learning_rate * tree.predict(frame.row(i));
            }
            loss_trace.push(mean_log_loss(&margins, labels));
            trees.push(tree);
        }

        Ok(BoostedEnsemble {
            trees,
            learning_rate: config.learning_rate,
            base_margin,
            config: config.clone(),
            feature_gain,
            loss_trace,
            n_cols: frame.n_cols,
            feature_space: FeatureSpace {
                yara_ids: frame.yara_ids.clone(),
                side_names: frame.side_names.clone(),
            },
        })
    })
}

pub fn predict_proba(ensemble: &BoostedEnsemble, frame: &FeatureFrame) -> Result<Vec<f64>> {
    if frame.n_cols != ensemble.n_cols {
        return Err(Error::ShapeMismatch(format!(
            "frame has {} columns but the ensemble was fitted on {}",
            frame.n_cols, ensemble.n_cols
        )));
    }
    frame.check_finite()?;
    Ok((0..frame.n_rows)
        .map(|i| sigmoid(ensemble.predict_margin(frame.row(i))))
        .collect())
}

/// Columns ranked by accumulated split gain, descending; ties broken by the
/// smaller column index. Columns that never split are omitted.
pub fn gain_importance(ensemble: &BoostedEnsemble) -> Vec<(u32, f64)> {
    let mut ranked: Vec<(u32, f64)> = ensemble
        .feature_gain
        .iter()
        .enumerate()
        .filter(|&(_, &g)| g > 0.0)
        .map(|(c, &g)| (c as u32, g))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    ranked
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeFile {
    Split { f: u32, t: f64, l: u32, r: u32 },
    Leaf { leaf: f64 },
}

#[derive(Serialize, Deserialize)]
struct GbdtFile {
    format: String,
    version: u32,
    base_margin: f64,
    learning_rate: f64,
    config: TrainConfig,
    trees: Vec<Vec<NodeFile>>,
    feature_space: FeatureSpace,
    n_cols: usize,
    feature_gain: Vec<f64>,
}

pub fn save_gbdt(ensemble: &BoostedEnsemble, path: &Path) -> Result<()> {
    let trees = ensemble
        .trees
        .iter()
        .map(|t| {
            t.nodes
                .iter()
                .map(|n| match n {
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => NodeFile::Split {
                        f: *feature,
                        t: *threshold,
                        l: *left,
                        r: *right,
                    },
                    TreeNode::Leaf { value } => NodeFile::Leaf { leaf: *value },
                })
                .collect()
        })
        .collect();
    let file = GbdtFile {
        format: GBDT_FORMAT.into(),
        version: GBDT_VERSION,
        base_margin: ensemble.base_margin,
        learning_rate: ensemble.learning_rate,
        config: ensemble.config.clone(),
        trees,
        feature_space: ensemble.feature_space.clone(),
        n_cols: ensemble.n_cols,
        feature_gain: ensemble.feature_gain.clone(),
    };
    let text = serde_json::to_string(&file)
        .map_err(|e| Error::ModelFormat(format!("serialize: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_gbdt(path: &Path) -> Result<BoostedEnsemble> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: GbdtFile =
        serde_json::from_str(&text).map_err(|e| Error::ModelFormat(format!("parse: {e}")))?;
    if file.format != GBDT_FORMAT {
        return Err(Error::ModelFormat(format!(
            "expected format {GBDT_FORMAT:?}, found {:?}",
            file.format
        )));
    }
    if file.version != GBDT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported version {}",
            file.version
        )));
    }
    let mut trees = Vec::with_capacity(file.trees.len());
    for nodes in &file.trees {
        let mut t = Tree::default();
        for n in nodes {
            t.nodes.push(match n {
                NodeFile::Split { f, t: th, l, r } => {
                    let (l, r) = (*l as usize, *r as usize);
                    if l >= nodes.len() || r >= nodes.len() {
                        return Err(Error::ModelFormat("child index out of range".into()));
                    }
                    if *f as usize >= file.n_cols {
                        return Err(Error::ModelFormat(format!(
                            "split feature {f} out of range"
                        )));
                    }
                    TreeNode::Split {
                        feature: *f,
                        threshold: *th,
                        left: l as u32,
                        right: r as u32,
                    }
                }
                NodeFile::Leaf { leaf } => TreeNode::Leaf { value: *leaf },
            });
        }
        if t.nodes.is_empty() {
            return Err(Error::ModelFormat("empty tree".into()));
        }
        trees.push(t);
    }
    Ok(BoostedEnsemble {
        trees,
        learning_rate: file.learning_rate,
        base_margin: file.base_margin,
        config: file.config,
        feature_gain: file.feature_gain,
        loss_trace: Vec::new(),
        n_cols: file.n_cols,
        feature_space: file.feature_space,
    })
}
