//! Unpenalized logistic regression over a dense feature frame, fitted with
//! the same proximal solver at λ=0 plus a tiny ridge term so duplicated or
//! nearly collinear columns stay conditioned. Columns are standardized
//! internally; reported weights are on the original scale, with constant
//! columns pinned to weight zero.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::frame::FeatureFrame;
use super::FeatureSpace;
use crate::error::{Error, Result};
use crate::selection::solver::{fit, sigmoid, FitOptions, Problem};
use crate::selection::DesignMatrix;

pub const LINEAR_RIDGE: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub feature_space: FeatureSpace,
    pub converged: bool,
}

impl LinearModel {
    pub fn predict_margin(&self, row: &[f64]) -> f64 {
        let mut m = self.intercept;
        for (&w, &x) in self.weights.iter().zip(row) {
            m += w * x;
        }
        m
    }

    pub fn predict_proba(&self, frame: &FeatureFrame) -> Result<Vec<f64>> {
        if frame.n_cols != self.weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "frame has {} columns but the model has {} weights",
                frame.n_cols,
                self.weights.len()
            )));
        }
        frame.check_finite()?;
        Ok((0..frame.n_rows)
            .map(|i| sigmoid(self.predict_margin(frame.row(i))))
            .collect())
    }
}

pub fn fit_linear_unpenalized(frame: &FeatureFrame, labels: &[u8]) -> Result<LinearModel> {
    frame.check_finite()?;
    if labels.len() != frame.n_rows {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            frame.n_rows
        )));
    }
    let empty: &[u32] = &[];
    let mut design = DesignMatrix::from_sparse(vec![empty; frame.n_rows], 0);
    let mut kept: Vec<usize> = Vec::new();
    for c in 0..frame.n_cols {
        let col = frame.column(c);
        if design.append_dense(&col, false, &format!("col{c}"))? {
            kept.push(c);
        }
    }
    let problem = Problem::new(&design, labels)?;
    let mut opts = FitOptions::for_lambda(0.0);
    opts.ridge = LINEAR_RIDGE;
    opts.rel_tol = 1e-10;
    opts.max_iters = 20_000;
    let r = fit(&problem, opts)?;

    // Map standardized weights back to the original column scale.
    let mut weights = vec![0.0; frame.n_cols];
    let mut intercept = r.b;
    for (m, &c) in kept.iter().enumerate() {
        let scale = &design.scaling()[m];
        weights[c] = r.w[m] / scale.std;
        intercept -= r.w[m] * scale.mean / scale.std;
    }
    Ok(LinearModel {
        weights,
        intercept,
        feature_space: FeatureSpace {
            yara_ids: frame.yara_ids.clone(),
            side_names: frame.side_names.clone(),
        },
        converged: r.converged,
    })
}

#[derive(Serialize, Deserialize)]
struct LinearFile {
    format: String,
    version: u32,
    kind: String,
    intercept: f64,
    weights: Vec<f64>,
    feature_space: FeatureSpace,
    converged: bool,
}

pub fn save_linear(model: &LinearModel, path: &Path) -> Result<()> {
    let file = LinearFile {
        format: "hayama-linear".into(),
        version: 1,
        kind: "final".into(),
        intercept: model.intercept,
        weights: model.weights.clone(),
        feature_space: model.feature_space.clone(),
        converged: model.converged,
    };
    let text = serde_json::to_string(&file)
        .map_err(|e| Error::ModelFormat(format!("serialize: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_linear(path: &Path) -> Result<LinearModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: LinearFile =
        serde_json::from_str(&text).map_err(|e| Error::ModelFormat(format!("parse: {e}")))?;
    if file.format != "hayama-linear" || file.kind != "final" {
        return Err(Error::ModelFormat(format!(
            "expected a final linear model, found format {:?} kind {:?}",
            file.format, file.kind
        )));
    }
    if file.version != 1 {
        return Err(Error::ModelFormat(format!(
            "unsupported version {}",
            file.version
        )));
    }
    if file.weights.iter().any(|w| !w.is_finite()) || !file.intercept.is_finite() {
        return Err(Error::ModelFormat("non-finite weights".into()));
    }
    Ok(LinearModel {
        weights: file.weights,
        intercept: file.intercept,
        feature_space: file.feature_space,
        converged: file.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_from_cols(cols: &[Vec<f64>]) -> FeatureFrame {
        let n = cols[0].len();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        FeatureFrame::from_rows(rows, vec![], (0..cols.len()).map(|c| format!("s{c}")).collect())
            .unwrap()
    }

    #[test]
    fn separable_single_feature_classifies_training_set() {
        let col: Vec<f64> = (0..30).map(|i| if i < 15 { -1.0 } else { 1.0 }).collect();
        let labels: Vec<u8> = (0..30).map(|i| (i >= 15) as u8).collect();
        let frame = frame_from_cols(&[col]);
        let m = fit_linear_unpenalized(&frame, &labels).unwrap();
        let probs = m.predict_proba(&frame).unwrap();
        for (p, &y) in probs.iter().zip(&labels) {
            assert_eq!((*p >= 0.5) as u8, y);
        }
    }

    #[test]
    fn duplicated_columns_match_single_column_predictions() {
        let base: Vec<f64> = (0..60)
            .map(|i| ((i * 37) % 17) as f64 / 17.0 - 0.5)
            .collect();
        let labels: Vec<u8> = base
            .iter()
            .enumerate()
            .map(|(i, &v)| ((v + ((i % 5) as f64 - 2.0) * 0.12) > 0.0) as u8)
            .collect();
        let single = frame_from_cols(&[base.clone()]);
        let doubled = frame_from_cols(&[base.clone(), base.clone()]);
        let m1 = fit_linear_unpenalized(&single, &labels).unwrap();
        let m2 = fit_linear_unpenalized(&doubled, &labels).unwrap();
        let p1 = m1.predict_proba(&single).unwrap();
        let p2 = m2.predict_proba(&doubled).unwrap();
        // Parity holds up to solver precision: the stopping rule is a relative
        // objective change, which leaves ~1e-5 slack in the effective weight.
        for (a, b) in p1.iter().zip(&p2) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
        // Total effect is split across the duplicates.
        assert!((m2.weights[0] + m2.weights[1] - m1.weights[0]).abs() < 1e-4);
    }

    #[test]
    fn constant_column_gets_zero_weight_and_prior_intercept() {
        let constant = vec![3.5; 40];
        let labels: Vec<u8> = (0..40).map(|i| (i % 4 == 0) as u8).collect();
        let frame = frame_from_cols(&[constant]);
        let m = fit_linear_unpenalized(&frame, &labels).unwrap();
        assert_eq!(m.weights[0], 0.0);
        let prior = 0.25f64;
        let expected = (prior / (1.0 - prior)).ln();
        assert!((m.intercept - expected).abs() < 1e-3, "{}", m.intercept);
    }

    #[test]
    fn linear_model_round_trips() {
        let col: Vec<f64> = (0..20).map(|i| (i as f64) / 7.0 - 1.2).collect();
        let labels: Vec<u8> = col.iter().map(|&v| (v > 0.0) as u8).collect();
        let frame = frame_from_cols(&[col]);
        let m = fit_linear_unpenalized(&frame, &labels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lin.json");
        save_linear(&m, &p).unwrap();
        let l = load_linear(&p).unwrap();
        assert_eq!(l.weights, m.weights);
        assert_eq!(l.intercept, m.intercept);
        assert_eq!(l.feature_space.side_names, m.feature_space.side_names);
    }
}
