//! Dense row-major feature frames consumed by the downstream learners.
//!
//! A frame's columns are an optional leading block of selected
//! sub-signature occurrence columns (0/1, identified by catalog id)
//! followed by an optional block of side-feature columns (identified by
//! name). Builders materialize the same layout from any dataset view, so a
//! model fitted on the train split can score the test split.

use crate::dataset::DatasetView;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct FeatureFrame {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row-major values.
    pub values: Vec<f64>,
    /// Per column: true when every value is 0 or 1.
    pub binary: Vec<bool>,
    /// Catalog ids of the leading sub-signature block.
    pub yara_ids: Vec<u64>,
    /// Names of the trailing side block.
    pub side_names: Vec<String>,
}

impl FeatureFrame {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, c)).collect()
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, yara_ids: Vec<u64>, side_names: Vec<String>) -> Result<Self> {
        let n_cols = yara_ids.len() + side_names.len();
        let n_rows = rows.len();
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} values, expected {n_cols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        let mut frame = FeatureFrame {
            n_rows,
            n_cols,
            values,
            binary: Vec::new(),
            yara_ids,
            side_names,
        };
        frame.binary = detect_binary(&frame);
        Ok(frame)
    }

    pub fn check_finite(&self) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "feature value at row {}, column {}",
                    i / self.n_cols.max(1),
                    i % self.n_cols.max(1)
                )));
            }
        }
        Ok(())
    }
}

fn detect_binary(frame: &FeatureFrame) -> Vec<bool> {
    (0..frame.n_cols)
        .map(|c| {
            (0..frame.n_rows).all(|i| {
                let v = frame.get(i, c);
                v == 0.0 || v == 1.0
            })
        })
        .collect()
}

fn build(
    view: &DatasetView,
    matrix_cols: &[usize],
    ids: &[u64],
    with_side: bool,
) -> Result<FeatureFrame> {
    if matrix_cols.len() != ids.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} selected columns but {} catalog ids",
            matrix_cols.len(),
            ids.len()
        )));
    }
    for &c in matrix_cols {
        if c >= view.n_sparse_cols() {
            return Err(Error::ShapeMismatch(format!(
                "selected column {c} out of range for {} matrix columns",
                view.n_sparse_cols()
            )));
        }
    }
    let side_names: Vec<String> = if with_side {
        view.side_names().to_vec()
    } else {
        Vec::new()
    };
    let n_cols = matrix_cols.len() + side_names.len();
    let n_rows = view.n_rows();
    let mut values = Vec::with_capacity(n_rows * n_cols);
    for i in 0..n_rows {
        let sparse = view.sparse_row(i);
        for &c in matrix_cols {
            let fired = sparse.binary_search(&(c as u32)).is_ok();
            values.push(if fired { 1.0 } else { 0.0 });
        }
        if with_side {
            if let Some(side) = view.side_row(i) {
                values.extend_from_slice(side);
            } else if !side_names.is_empty() {
                return Err(Error::SideFeatures(
                    "view has side names but no side rows".into(),
                ));
            }
        }
    }
    let mut frame = FeatureFrame {
        n_rows,
        n_cols,
        values,
        binary: Vec::new(),
        yara_ids: ids.to_vec(),
        side_names,
    };
    frame.binary = detect_binary(&frame);
    Ok(frame)
}

/// Side columns only; the baseline model's input.
pub fn side_frame(view: &DatasetView) -> Result<FeatureFrame> {
    build(view, &[], &[], true)
}

/// Selected sub-signature columns only.
pub fn yara_frame(view: &DatasetView, matrix_cols: &[usize], ids: &[u64]) -> Result<FeatureFrame> {
    build(view, matrix_cols, ids, false)
}

/// Selected sub-signature columns followed by every side column.
pub fn combined_frame(
    view: &DatasetView,
    matrix_cols: &[usize],
    ids: &[u64],
) -> Result<FeatureFrame> {
    build(view, matrix_cols, ids, true)
}
