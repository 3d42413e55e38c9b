//! Measurements over scan matrices and model scores: per-feature hit
//! statistics, ROC curves with low-FPR partial AUC, occurrence ECDFs,
//! correlation matrices, and a first-component PLS correlation between
//! two feature blocks.

use serde::Serialize;

use crate::boosting::{predict_proba, BoostedEnsemble, FeatureFrame, LinearModel};
use crate::error::{Error, Result};
use crate::scanner::OccurrenceMatrix;

/// Default FPR cap for the partial AUC.
pub const DEFAULT_FPR_CAP: f64 = 0.01;

/// Hit counts and classification metrics for one sub-signature column,
/// scoring the rule "fires implies malware".
#[derive(Clone, Debug, Serialize)]
pub struct FeatureStats {
    pub column: u32,
    #[serde(serialize_with = "ser_hex_id")]
    pub id: u64,
    pub fire_count_total: usize,
    pub fire_count_malware: usize,
    pub fire_count_benign: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// Set when the feature fired on no sample; precision is recorded as 0.
    pub never_fired: bool,
}

fn ser_hex_id<S: serde::Serializer>(id: &u64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{id:016x}"))
}

fn stats_from_counts(
    column: u32,
    id: u64,
    malware_fires: usize,
    benign_fires: usize,
    n_malware: usize,
    n_benign: usize,
) -> FeatureStats {
    let n = n_malware + n_benign;
    let tp = malware_fires as f64;
    let tn = (n_benign - benign_fires) as f64;
    let total = malware_fires + benign_fires;
    let precision = if total == 0 { 0.0 } else { tp / total as f64 };
    let recall = if n_malware == 0 { 0.0 } else { tp / n_malware as f64 };
    FeatureStats {
        column,
        id,
        fire_count_total: total,
        fire_count_malware: malware_fires,
        fire_count_benign: benign_fires,
        accuracy: (tp + tn) / n as f64,
        precision,
        recall,
        never_fired: total == 0,
    }
}

/// Per-column hit statistics over a labeled occurrence matrix, one sparse pass.
pub fn per_feature_stats(matrix: &OccurrenceMatrix) -> Result<Vec<FeatureStats>> {
    let labels = matrix.labels.as_ref().ok_or(Error::MissingLabels)?;
    stats_over_rows(
        matrix,
        (0..matrix.n_rows()).map(|i| (i, labels[i])),
    )
}

/// Same statistics restricted to a row subset, for split-local computation.
pub fn per_feature_stats_rows(
    matrix: &OccurrenceMatrix,
    rows: &[usize],
    labels: &[u8],
) -> Result<Vec<FeatureStats>> {
    if rows.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rows vs {} labels",
            rows.len(),
            labels.len()
        )));
    }
    stats_over_rows(matrix, rows.iter().copied().zip(labels.iter().copied()))
}

fn stats_over_rows(
    matrix: &OccurrenceMatrix,
    rows: impl Iterator<Item = (usize, u8)>,
) -> Result<Vec<FeatureStats>> {
    let d = matrix.n_cols();
    let mut malware_fires = vec![0usize; d];
    let mut benign_fires = vec![0usize; d];
    let mut n_malware = 0usize;
    let mut n_benign = 0usize;
    for (row, label) in rows {
        let counts = if label == 1 {
            n_malware += 1;
            &mut malware_fires
        } else {
            n_benign += 1;
            &mut benign_fires
        };
        for &c in matrix.row(row) {
            counts[c as usize] += 1;
        }
    }
    Ok((0..d)
        .map(|c| {
            stats_from_counts(
                c as u32,
                matrix.col_ids[c],
                malware_fires[c],
                benign_fires[c],
                n_malware,
                n_benign,
            )
        })
        .collect())
}

/// Ranking metric for [`topk_by_metric`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StatMetric {
    Accuracy,
    Precision,
    Recall,
}

impl StatMetric {
    pub fn from_token(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "accuracy" => Some(StatMetric::Accuracy),
            "precision" => Some(StatMetric::Precision),
            "recall" => Some(StatMetric::Recall),
            _ => None,
        }
    }

    fn of(self, s: &FeatureStats) -> f64 {
        match self {
            StatMetric::Accuracy => s.accuracy,
            StatMetric::Precision => s.precision,
            StatMetric::Recall => s.recall,
        }
    }
}

/// Columns of the `k` best features by the chosen metric, descending, with
/// ties broken toward the lower column index. `k > d` returns everything.
pub fn topk_by_metric(stats: &[FeatureStats], metric: StatMetric, k: usize) -> Vec<u32> {
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| {
        metric
            .of(&stats[b])
            .partial_cmp(&metric.of(&stats[a]))
            .unwrap()
            .then(stats[a].column.cmp(&stats[b].column))
    });
    order.truncate(k);
    order.into_iter().map(|i| stats[i].column).collect()
}

/// ROC curve over tie-grouped score thresholds. `points` runs from (0, 0)
/// to (1, 1); `thresholds[i]` is the score cut producing `points[i + 1]`
/// (predict malware when score >= threshold).
#[derive(Clone, Debug, Serialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub thresholds: Vec<f64>,
}

/// ROC curve plus full AUC and the normalized partial AUC below `fpr_cap`.
///
/// The partial area integrates TPR over FPR in [0, cap] with linear
/// interpolation at the cap, then divides by the cap so a perfect
/// classifier scores 1.0. Trapezoid integration over tie-grouped points
/// gives the rank-statistic AUC with half credit for score ties.
pub fn roc_and_partial_auc(
    scores: &[f64],
    labels: &[u8],
    fpr_cap: f64,
) -> Result<(RocCurve, f64, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if !(fpr_cap > 0.0 && fpr_cap <= 1.0) {
        return Err(Error::Validation(format!("fpr cap {fpr_cap} not in (0, 1]")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores contain a non-finite value".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = Vec::new();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let mut j = i;
        while j < order.len() && scores[order[j]] == s {
            if labels[order[j]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        thresholds.push(s);
        i = j;
    }

    let full_auc = trapezoid(&points, 1.0);
    let partial = trapezoid(&points, fpr_cap) / fpr_cap;
    Ok((RocCurve { points, thresholds }, full_auc, partial))
}

/// Area under the piecewise-linear curve for FPR in [0, cap].
fn trapezoid(points: &[(f64, f64)], cap: f64) -> f64 {
    let mut area = 0.0;
    for w in points.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if x0 >= cap {
            break;
        }
        if x1 <= cap {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            // Split the segment at the cap.
            let t = (cap - x0) / (x1 - x0);
            let y_cap = y0 + t * (y1 - y0);
            area += (cap - x0) * (y0 + y_cap) / 2.0;
            break;
        }
    }
    area
}

/// Which class a per-class analysis restricts to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassFilter {
    Malware,
    Benign,
}

impl ClassFilter {
    pub fn from_token(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "malware" => Some(ClassFilter::Malware),
            "benign" => Some(ClassFilter::Benign),
            _ => None,
        }
    }

    fn label(self) -> u8 {
        match self {
            ClassFilter::Malware => 1,
            ClassFilter::Benign => 0,
        }
    }
}

/// ECDF of per-feature fire counts within one class: (count, proportion of
/// features whose count is <= that value), one entry per distinct count.
pub fn occurrence_ecdf(
    matrix: &OccurrenceMatrix,
    class: ClassFilter,
) -> Result<Vec<(usize, f64)>> {
    let labels = matrix.labels.as_ref().ok_or(Error::MissingLabels)?;
    let d = matrix.n_cols();
    if d == 0 {
        return Ok(Vec::new());
    }
    let want = class.label();
    let mut counts = vec![0usize; d];
    for row in 0..matrix.n_rows() {
        if labels[row] != want {
            continue;
        }
        for &c in matrix.row(row) {
            counts[c as usize] += 1;
        }
    }
    counts.sort_unstable();
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (i, &c) in counts.iter().enumerate() {
        let cum = (i + 1) as f64 / d as f64;
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 = cum,
            _ => out.push((c, cum)),
        }
    }
    Ok(out)
}

/// Pairwise Pearson correlations over the concatenation of two column
/// blocks. Entries touching a zero-variance column are recorded as 0 and
/// the column is flagged.
#[derive(Clone, Debug, Serialize)]
pub struct CorrelationMatrix {
    pub n: usize,
    /// Row-major n x n values.
    pub values: Vec<f64>,
    pub zero_variance: Vec<bool>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

pub fn correlation_matrix(
    columns_a: &[Vec<f64>],
    columns_b: &[Vec<f64>],
) -> Result<CorrelationMatrix> {
    let cols: Vec<&Vec<f64>> = columns_a.iter().chain(columns_b.iter()).collect();
    let m = cols.len();
    if m == 0 {
        return Ok(CorrelationMatrix {
            n: 0,
            values: Vec::new(),
            zero_variance: Vec::new(),
        });
    }
    let n = cols[0].len();
    if n == 0 {
        return Err(Error::Validation("correlation over empty columns".into()));
    }
    for (i, c) in cols.iter().enumerate() {
        if c.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "column {i} has {} rows, expected {n}",
                c.len()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("column {i} is not finite")));
        }
    }

    // Center once, then every pairwise correlation is a dot-product ratio.
    let centered: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            let mean = c.iter().sum::<f64>() / n as f64;
            c.iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let zero_variance: Vec<bool> = norms.iter().map(|&s| s <= 0.0).collect();

    let mut values = vec![0.0; m * m];
    for i in 0..m {
        if zero_variance[i] {
            continue;
        }
        values[i * m + i] = 1.0;
        for j in (i + 1)..m {
            if zero_variance[j] {
                continue;
            }
            let dot: f64 = centered[i]
                .iter()
                .zip(&centered[j])
                .map(|(a, b)| a * b)
                .sum();
            let r = dot / (norms[i] * norms[j]);
            values[i * m + j] = r;
            values[j * m + i] = r;
        }
    }
    Ok(CorrelationMatrix {
        n: m,
        values,
        zero_variance,
    })
}

const PLS_TOL: f64 = 1e-10;
const PLS_MAX_ITERS: usize = 500;

/// Absolute Pearson correlation between the first pair of PLS component
/// scores of two column blocks.
///
/// Both blocks are centered and zero-variance columns dropped. The first
/// component is extracted by alternating power iteration on the
/// cross-covariance: w ∝ Xᵀu, t = Xw, c ∝ Yᵀt, u = Yc, until the X-weight
/// change falls below 1e-10 or 500 iterations pass.
pub fn pls_max_correlation(
    yara_columns: &[Vec<f64>],
    side_columns: &[Vec<f64>],
) -> Result<f64> {
    let x = center_block(yara_columns, "first block")?;
    let y = center_block(side_columns, "second block")?;
    let n = x[0].len();
    if y[0].len() != n {
        return Err(Error::ShapeMismatch(format!(
            "blocks have {n} vs {} rows",
            y[0].len()
        )));
    }
    if n < 2 {
        return Err(Error::Degenerate("need at least 2 samples".into()));
    }

    // Start u from the highest-variance response column.
    let u0 = y
        .iter()
        .max_by(|a, b| {
            let va: f64 = a.iter().map(|v| v * v).sum();
            let vb: f64 = b.iter().map(|v| v * v).sum();
            va.partial_cmp(&vb).unwrap()
        })
        .unwrap();
    let mut u = u0.clone();
    let mut w_prev: Option<Vec<f64>> = None;
    let mut t = vec![0.0; n];
    for _ in 0..PLS_MAX_ITERS {
        let mut w: Vec<f64> = x.iter().map(|col| dot(col, &u)).collect();
        normalize(&mut w)?;
        for (i, ti) in t.iter_mut().enumerate() {
            *ti = x.iter().zip(&w).map(|(col, wj)| col[i] * wj).sum();
        }
        let mut c: Vec<f64> = y.iter().map(|col| dot(col, &t)).collect();
        normalize(&mut c)?;
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = y.iter().zip(&c).map(|(col, cj)| col[i] * cj).sum();
        }
        let done = w_prev
            .as_ref()
            .is_some_and(|p| p.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) < PLS_TOL);
        w_prev = Some(w);
        if done {
            break;
        }
    }

    let r = pearson(&t, &u)?;
    Ok(r.abs().min(1.0))
}

/// Centers a block and drops zero-variance columns; errors when none survive.
fn center_block(columns: &[Vec<f64>], what: &str) -> Result<Vec<Vec<f64>>> {
    if columns.is_empty() {
        return Err(Error::Degenerate(format!("{what} has no columns")));
    }
    let n = columns[0].len();
    let mut out = Vec::new();
    for (i, c) in columns.iter().enumerate() {
        if c.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "column {i} has {} rows, expected {n}",
                c.len()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{what} column {i} is not finite")));
        }
        let mean = c.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = c.iter().map(|v| v - mean).collect();
        if centered.iter().map(|v| v * v).sum::<f64>() > 0.0 {
            out.push(centered);
        }
    }
    if out.is_empty() {
        return Err(Error::Degenerate(format!(
            "{what} has no columns with variance"
        )));
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> Result<()> {
    let norm = dot(v, v).sqrt();
    if norm <= 0.0 || !norm.is_finite() {
        return Err(Error::Degenerate("zero weight vector in PLS".into()));
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    Ok(())
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return Err(Error::Degenerate("component scores have no variance".into()));
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

/// Confusion counts at the 0.5 probability threshold (>= predicts malware).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Confusion {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

/// Evaluation summary for one scored split.
#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub split: String,
    pub n: usize,
    pub accuracy: f64,
    pub full_auc: f64,
    /// Normalized partial AUC at FPR <= 0.01.
    pub partial_auc: f64,
    pub confusion: Confusion,
    pub curve: RocCurve,
}

/// Metrics for a probability score vector against labels.
pub fn evaluate_scores(split: &str, scores: &[f64], labels: &[u8]) -> Result<EvalReport> {
    let (curve, full_auc, partial_auc) = roc_and_partial_auc(scores, labels, DEFAULT_FPR_CAP)?;
    let mut conf = Confusion {
        true_pos: 0,
        false_pos: 0,
        true_neg: 0,
        false_neg: 0,
    };
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= 0.5, y == 1) {
            (true, true) => conf.true_pos += 1,
            (true, false) => conf.false_pos += 1,
            (false, false) => conf.true_neg += 1,
            (false, true) => conf.false_neg += 1,
        }
    }
    Ok(EvalReport {
        split: split.to_string(),
        n: scores.len(),
        accuracy: (conf.true_pos + conf.true_neg) as f64 / scores.len() as f64,
        full_auc,
        partial_auc,
        confusion: conf,
        curve,
    })
}

/// Anything that outputs a malware probability per frame row.
pub trait ProbScorer {
    fn proba(&self, frame: &FeatureFrame) -> Result<Vec<f64>>;
}

impl ProbScorer for BoostedEnsemble {
    fn proba(&self, frame: &FeatureFrame) -> Result<Vec<f64>> {
        predict_proba(self, frame)
    }
}

impl ProbScorer for LinearModel {
    fn proba(&self, frame: &FeatureFrame) -> Result<Vec<f64>> {
        self.predict_proba(frame)
    }
}

/// Scores a fitted model on a frame and evaluates against labels.
pub fn evaluate_model<M: ProbScorer>(
    model: &M,
    frame: &FeatureFrame,
    labels: &[u8],
    split: &str,
) -> Result<EvalReport> {
    if labels.len() != frame.n_rows {
        return Err(Error::ShapeMismatch(format!(
            "{} labels vs {} rows",
            labels.len(),
            frame.n_rows
        )));
    }
    let scores = model.proba(frame)?;
    evaluate_scores(split, &scores, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scanner::OccurrenceMatrix;

    fn matrix(rows: Vec<Vec<u32>>, n_cols: usize, labels: Vec<u8>) -> OccurrenceMatrix {
        let ids: Vec<String> = (0..rows.len()).map(|i| format!("f{i}")).collect();
        OccurrenceMatrix::from_rows(
            rows,
            n_cols,
            ids,
            (0..n_cols as u64).collect(),
            Some(labels),
        )
        .unwrap()
    }

    #[test]
    fn perfect_feature_scores_ones() {
        let m = matrix(
            vec![vec![0], vec![0], vec![], vec![]],
            1,
            vec![1, 1, 0, 0],
        );
        let s = &per_feature_stats(&m).unwrap()[0];
        assert_eq!(s.accuracy, 1.0);
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 1.0);
        assert!(!s.never_fired);
    }

    #[test]
    fn silent_feature_on_balanced_corpus() {
        let m = matrix(vec![vec![], vec![], vec![], vec![]], 1, vec![1, 1, 0, 0]);
        let s = &per_feature_stats(&m).unwrap()[0];
        assert_eq!(s.accuracy, 0.5);
        assert_eq!(s.recall, 0.0);
        assert_eq!(s.precision, 0.0);
        assert!(s.never_fired);
    }

    #[test]
    fn hand_counted_six_sample_fixture() {
        // Feature fires on rows 0,1 (malware) and row 3 (benign).
        // Labels: rows 0..3 malware, rows 3..6 benign.
        let m = matrix(
            vec![vec![0], vec![0], vec![], vec![0], vec![], vec![]],
            1,
            vec![1, 1, 1, 0, 0, 0],
        );
        let s = &per_feature_stats(&m).unwrap()[0];
        // TP=2 FP=1 TN=2 FN=1.
        assert_eq!(s.fire_count_total, 3);
        assert_eq!(s.accuracy, 4.0 / 6.0);
        assert_eq!(s.precision, 2.0 / 3.0);
        assert_eq!(s.recall, 2.0 / 3.0);
    }

    #[test]
    fn stats_error_without_labels() {
        let m = OccurrenceMatrix::from_rows(
            vec![vec![], vec![]],
            1,
            vec!["a".into(), "b".into()],
            vec![7],
            None,
        )
        .unwrap();
        assert!(matches!(per_feature_stats(&m), Err(Error::MissingLabels)));
    }

    #[test]
    fn topk_orders_and_truncates() {
        let m = matrix(
            vec![vec![0, 2], vec![0, 1, 2], vec![1, 2], vec![2]],
            4,
            vec![1, 1, 0, 0],
        );
        let stats = per_feature_stats(&m).unwrap();
        // col 0 fires on both malware only: accuracy 1.0. col 1 one each: 0.5.
        // col 2 fires everywhere: 0.5. col 3 never fires: 0.5.
        let top = topk_by_metric(&stats, StatMetric::Accuracy, 1);
        assert_eq!(top, vec![0]);
        let all = topk_by_metric(&stats, StatMetric::Accuracy, 10);
        assert_eq!(all.len(), 4);
        // Ties at 0.5 resolve by column order.
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    #[test]
    fn roc_perfect_separation() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let labels = [1, 1, 0, 0];
        let (curve, auc, pauc) = roc_and_partial_auc(&scores, &labels, 0.01).unwrap();
        assert_eq!(auc, 1.0);
        assert_eq!(pauc, 1.0);
        assert_eq!(curve.points.first().unwrap(), &(0.0, 0.0));
        assert_eq!(curve.points.last().unwrap(), &(1.0, 1.0));
    }

    #[test]
    fn roc_constant_scores_is_chance() {
        let scores = [0.5; 6];
        let labels = [1, 0, 1, 0, 1, 0];
        let (curve, auc, pauc) = roc_and_partial_auc(&scores, &labels, 0.01).unwrap();
        assert_eq!(curve.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(auc, 0.5);
        assert!((pauc - 0.005).abs() < 1e-15);
    }

    #[test]
    fn roc_rejects_single_class() {
        let scores = [0.1, 0.9];
        assert!(matches!(
            roc_and_partial_auc(&scores, &[1, 1], 0.01),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn roc_monotone_with_ties() {
        let scores = [0.9, 0.7, 0.7, 0.7, 0.3, 0.1, 0.1, 0.05];
        let labels = [1, 1, 0, 1, 0, 1, 0, 0];
        let (curve, auc, pauc) = roc_and_partial_auc(&scores, &labels, 0.25).unwrap();
        for w in curve.points.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        assert!(auc > 0.5 && auc < 1.0);
        assert!(pauc <= 1.0);
        // Tie group of three at 0.7 advances FPR and TPR in one step.
        assert!(curve.thresholds.contains(&0.7));
    }

    #[test]
    fn partial_auc_never_exceeds_tpr_at_cap_and_grows_with_cap() {
        let scores = [0.9, 0.8, 0.75, 0.6, 0.55, 0.4, 0.35, 0.2];
        let labels = [1, 0, 1, 1, 0, 1, 0, 0];
        let mut prev = 0.0;
        for cap in [0.01, 0.1, 0.25, 0.5, 1.0] {
            let (curve, _, pauc) = roc_and_partial_auc(&scores, &labels, cap).unwrap();
            let tpr_at_cap = curve
                .points
                .windows(2)
                .find_map(|w| {
                    let ((x0, y0), (x1, y1)) = (w[0], w[1]);
                    if x1 >= cap && x1 > x0 {
                        Some(y0 + (cap - x0) / (x1 - x0) * (y1 - y0))
                    } else if x1 >= cap {
                        Some(y1)
                    } else {
                        None
                    }
                })
                .unwrap_or(1.0);
            assert!(pauc <= tpr_at_cap + 1e-12);
            assert!(pauc + 1e-12 >= prev);
            prev = pauc;
        }
    }

    #[test]
    fn ecdf_hand_fixture() {
        // Three features; within malware rows feature 2 fires 5 times,
        // features 0 and 1 never.
        let mut rows = vec![vec![2]; 5];
        rows.push(vec![]);
        let m = matrix(rows, 3, vec![1, 1, 1, 1, 1, 0]);
        let e = occurrence_ecdf(&m, ClassFilter::Malware).unwrap();
        assert_eq!(e, vec![(0, 2.0 / 3.0), (5, 1.0)]);
        let b = occurrence_ecdf(&m, ClassFilter::Benign).unwrap();
        assert_eq!(b, vec![(0, 1.0)]);
    }

    #[test]
    fn ecdf_all_features_fire_everywhere() {
        let rows = vec![vec![0, 1], vec![0, 1], vec![0, 1]];
        let m = matrix(rows, 2, vec![1, 1, 1]);
        let e = occurrence_ecdf(&m, ClassFilter::Malware).unwrap();
        assert_eq!(e, vec![(3, 1.0)]);
    }

    #[test]
    fn correlation_identity_and_complement() {
        let x = vec![1.0, 0.0, 1.0, 1.0, 0.0];
        let comp: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();
        let m = correlation_matrix(&[x.clone()], &[x.clone(), comp]).unwrap();
        assert_eq!(m.n, 3);
        assert!((m.get(0, 1) - 1.0).abs() < 1e-15);
        assert!((m.get(0, 2) + 1.0).abs() < 1e-15);
        assert_eq!(m.get(0, 0), 1.0);
        assert!(!m.zero_variance[0]);
    }

    #[test]
    fn correlation_zero_variance_flagged() {
        let x = vec![1.0, 2.0, 3.0];
        let flat = vec![4.0, 4.0, 4.0];
        let m = correlation_matrix(&[x], &[flat]).unwrap();
        assert!(m.zero_variance[1]);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn pls_copy_block_is_perfectly_correlated() {
        // The second predictor column is orthogonalized against the copied
        // one so the first component loads on the copy alone.
        let n = 50;
        let col: Vec<f64> = (0..n).map(|i| ((i * 13) % 7) as f64).collect();
        let raw: Vec<f64> = (0..n).map(|i| ((i * 5) % 11) as f64).collect();
        let center = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| x - m).collect::<Vec<f64>>()
        };
        let c0 = center(&col);
        let c1 = center(&raw);
        let proj = dot(&c0, &c1) / dot(&c0, &c0);
        let other: Vec<f64> = c1.iter().zip(&c0).map(|(b, a)| b - proj * a).collect();
        let r = pls_max_correlation(&[c0.clone(), other], &[c0]).unwrap();
        assert!((r - 1.0).abs() < 1e-9, "{r}");
    }

    #[test]
    fn pls_rejects_flat_blocks() {
        let flat = vec![1.0; 10];
        let live: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(
            pls_max_correlation(&[flat], &[live]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn evaluate_perfect_and_constant_predictors() {
        let labels = [1, 1, 0, 0];
        let perfect = [1.0, 0.9, 0.1, 0.0];
        let r = evaluate_scores("test", &perfect, &labels).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.full_auc, 1.0);
        assert_eq!(r.partial_auc, 1.0);
        assert_eq!(r.confusion.true_pos, 2);
        assert_eq!(r.confusion.true_neg, 2);

        // p = 0.5 everywhere predicts malware by the >= rule.
        let constant = [0.5; 4];
        let r = evaluate_scores("test", &constant, &labels).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.confusion.true_pos, 2);
        assert_eq!(r.confusion.false_pos, 2);
    }
}
