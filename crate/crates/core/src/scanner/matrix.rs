//! Sparse binary occurrence matrix (rows = samples, columns = catalog
//! entries) in CSR form, plus its on-disk format.
//!
//! The binary layout is little-endian throughout:
//!
//! ```text
//! magic "HYM1" | u32 version | u64 n_rows | u64 n_cols | u64 nnz |
//! u8 has_labels | (n_rows+1) x u64 row offsets | nnz x u32 col indices |
//! n_rows x u8 labels (if present) | u32 crc32 of all preceding bytes
//! ```
//!
//! Row and column identities travel in a JSON sidecar next to the matrix
//! file (`<path>.sidecar.json`), keeping the hot payload fixed-width.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 4] = b"HYM1";
pub const MATRIX_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OccurrenceMatrix {
    n_cols: usize,
    row_offsets: Vec<u64>,
    col_indices: Vec<u32>,
    pub row_ids: Vec<String>,
    pub col_ids: Vec<u64>,
    pub labels: Option<Vec<u8>>,
}

impl OccurrenceMatrix {
    /// Assembles a matrix from per-row sorted column index lists.
    pub fn from_rows(
        rows: Vec<Vec<u32>>,
        n_cols: usize,
        row_ids: Vec<String>,
        col_ids: Vec<u64>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        if row_ids.len() != rows.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} row ids for {} rows",
                row_ids.len(),
                rows.len()
            )));
        }
        if col_ids.len() != n_cols {
            return Err(Error::ShapeMismatch(format!(
                "{} col ids for {} columns",
                col_ids.len(),
                n_cols
            )));
        }
        if let Some(l) = &labels {
            if l.len() != rows.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for {} rows",
                    l.len(),
                    rows.len()
                )));
            }
        }
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        row_offsets.push(0u64);
        let mut col_indices = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            for w in r.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::MatrixFormat(format!(
                        "row {i} columns not strictly sorted"
                    )));
                }
            }
            if let Some(&last) = r.last() {
                if last as usize >= n_cols {
                    return Err(Error::MatrixFormat(format!(
                        "row {i} column {last} out of range for {n_cols} columns"
                    )));
                }
            }
            col_indices.extend_from_slice(r);
            row_offsets.push(col_indices.len() as u64);
        }
        let m = OccurrenceMatrix {
            n_cols,
            row_offsets,
            col_indices,
            row_ids,
            col_ids,
            labels,
        };
        m.check_labels()?;
        Ok(m)
    }

    fn check_labels(&self) -> Result<()> {
        if let Some(l) = &self.labels {
            if let Some(bad) = l.iter().find(|&&v| v > 1) {
                return Err(Error::MatrixFormat(format!("label {bad} is not 0/1")));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    /// Sorted column indices present in row `i`.
    pub fn row(&self, i: usize) -> &[u32] {
        let lo = self.row_offsets[i] as usize;
        let hi = self.row_offsets[i + 1] as usize;
        &self.col_indices[lo..hi]
    }

    pub fn density(&self) -> f64 {
        let cells = self.n_rows() * self.n_cols;
        if cells == 0 {
            0.0
        } else {
            self.nnz() as f64 / cells as f64
        }
    }

    /// Encodes the fixed-width payload (everything except the sidecar).
    pub fn encode_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            4 + 4 + 8 * 3 + 1 + self.row_offsets.len() * 8 + self.col_indices.len() * 4 + 4,
        );
        out.extend_from_slice(MATRIX_MAGIC);
        out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_rows() as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_cols as u64).to_le_bytes());
        out.extend_from_slice(&(self.nnz() as u64).to_le_bytes());
        out.push(self.labels.is_some() as u8);
        for &o in &self.row_offsets {
            out.extend_from_slice(&o.to_le_bytes());
        }
        for &c in &self.col_indices {
            out.extend_from_slice(&c.to_le_bytes());
        }
        if let Some(l) = &self.labels {
            out.extend_from_slice(l);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode_payload(bytes: &[u8]) -> Result<DecodedPayload> {
        let mut r = Reader { b: bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MATRIX_MAGIC {
            return Err(Error::MatrixMagic);
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != MATRIX_VERSION {
            return Err(Error::MatrixVersion {
                found: version,
                expected: MATRIX_VERSION,
            });
        }
        let n_rows = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
        let n_cols = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
        let nnz = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
        let has_labels = r.take(1)?[0];
        if has_labels > 1 {
            return Err(Error::MatrixFormat(format!(
                "has_labels byte is {has_labels}"
            )));
        }

        let needed = r.pos as u64
            + (n_rows as u64 + 1) * 8
            + nnz as u64 * 4
            + if has_labels == 1 { n_rows as u64 } else { 0 }
            + 4;
        if (bytes.len() as u64) < needed {
            return Err(Error::MatrixTruncated {
                needed,
                have: bytes.len() as u64,
            });
        }

        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        for _ in 0..=n_rows {
            row_offsets.push(u64::from_le_bytes(r.take(8)?.try_into().unwrap()));
        }
        let mut col_indices = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            col_indices.push(u32::from_le_bytes(r.take(4)?.try_into().unwrap()));
        }
        let labels = if has_labels == 1 {
            Some(r.take(n_rows)?.to_vec())
        } else {
            None
        };
        let crc_stored = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        let crc_computed = crc32fast::hash(&bytes[..r.pos - 4]);
        if crc_stored != crc_computed {
            return Err(Error::MatrixChecksum {
                stored: crc_stored,
                computed: crc_computed,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::MatrixFormat(format!(
                "{} trailing bytes after checksum",
                bytes.len() - r.pos
            )));
        }

        if row_offsets.first() != Some(&0) || row_offsets.last() != Some(&(nnz as u64)) {
            return Err(Error::MatrixFormat("row offsets do not span nnz".into()));
        }
        for w in row_offsets.windows(2) {
            if w[0] > w[1] {
                return Err(Error::MatrixFormat("row offsets decrease".into()));
            }
        }
        for i in 0..n_rows {
            let lo = row_offsets[i] as usize;
            let hi = row_offsets[i + 1] as usize;
            let row = &col_indices[lo..hi];
            for w in row.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::MatrixFormat(format!(
                        "row {i} columns not strictly sorted"
                    )));
                }
            }
            if let Some(&last) = row.last() {
                if last as usize >= n_cols {
                    return Err(Error::MatrixFormat(format!(
                        "row {i} column {last} out of range"
                    )));
                }
            }
        }
        Ok(DecodedPayload {
            n_cols,
            row_offsets,
            col_indices,
            labels,
        })
    }
}

#[derive(Debug)]
pub struct DecodedPayload {
    pub n_cols: usize,
    pub row_offsets: Vec<u64>,
    pub col_indices: Vec<u32>,
    pub labels: Option<Vec<u8>>,
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.b.len() {
            return Err(Error::MatrixTruncated {
                needed: (self.pos + n) as u64,
                have: self.b.len() as u64,
            });
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    row_ids: Vec<String>,
    col_ids: Vec<String>,
}

pub fn sidecar_path(matrix_path: &Path) -> PathBuf {
    let mut s = matrix_path.as_os_str().to_os_string();
    s.push(".sidecar.json");
    PathBuf::from(s)
}

/// Writes the matrix payload and its id sidecar next to each other.
pub fn save_matrix(m: &OccurrenceMatrix, path: &Path) -> Result<()> {
    std::fs::write(path, m.encode_payload()).map_err(|e| Error::io(path, e))?;
    let sidecar = Sidecar {
        row_ids: m.row_ids.clone(),
        col_ids: m.col_ids.iter().map(|id| format!("{id:016x}")).collect(),
    };
    let sp = sidecar_path(path);
    let json =
        serde_json::to_string(&sidecar).map_err(|e| Error::MatrixFormat(e.to_string()))?;
    std::fs::write(&sp, json).map_err(|e| Error::io(&sp, e))
}

pub fn load_matrix(path: &Path) -> Result<OccurrenceMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let payload = OccurrenceMatrix::decode_payload(&bytes)?;
    let sp = sidecar_path(path);
    let sidecar_bytes = std::fs::read(&sp).map_err(|e| Error::io(&sp, e))?;
    let sidecar: Sidecar = serde_json::from_slice(&sidecar_bytes)
        .map_err(|e| Error::MatrixFormat(format!("bad sidecar: {e}")))?;
    let n_rows = payload.row_offsets.len() - 1;
    if sidecar.row_ids.len() != n_rows {
        return Err(Error::MatrixFormat(format!(
            "sidecar has {} row ids for {} rows",
            sidecar.row_ids.len(),
            n_rows
        )));
    }
    if sidecar.col_ids.len() != payload.n_cols {
        return Err(Error::MatrixFormat(format!(
            "sidecar has {} col ids for {} columns",
            sidecar.col_ids.len(),
            payload.n_cols
        )));
    }
    let mut col_ids = Vec::with_capacity(payload.n_cols);
    for c in &sidecar.col_ids {
        col_ids.push(
            u64::from_str_radix(c, 16)
                .map_err(|e| Error::MatrixFormat(format!("bad col id {c:?}: {e}")))?,
        );
    }
    let m = OccurrenceMatrix {
        n_cols: payload.n_cols,
        row_offsets: payload.row_offsets,
        col_indices: payload.col_indices,
        row_ids: sidecar.row_ids,
        col_ids,
        labels: payload.labels,
    };
    m.check_labels()?;
    Ok(m)
}
