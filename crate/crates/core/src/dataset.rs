//! Labeled corpus bookkeeping: the sample manifest, optional dense side
//! features joined by sample key, and split-aware views over an occurrence
//! matrix.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scanner::OccurrenceMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
    Valid,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "TRAIN",
            Split::Test => "TEST",
            Split::Valid => "VALID",
        }
    }

    pub fn from_token(token: &str) -> Option<Split> {
        match token.trim().to_ascii_uppercase().as_str() {
            "TRAIN" => Some(Split::Train),
            "TEST" => Some(Split::Test),
            "VALID" => Some(Split::Valid),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct SampleRecord {
    pub key: String,
    pub path: PathBuf,
    pub label: u8,
    pub split: Split,
}

#[derive(Clone, Debug)]
pub struct CorpusManifest {
    pub records: Vec<SampleRecord>,
}

impl CorpusManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn keys(&self) -> Vec<String> {
        self.records.iter().map(|r| r.key.clone()).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn indices_for(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter_map(|(i, r)| (r.split == split).then_some(i))
            .collect()
    }

    /// Writes the manifest as CSV with paths exactly as stored.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["key", "path", "label", "split"])
            .map_err(|e| csv_io(path, e))?;
        for r in &self.records {
            w.write_record([
                r.key.as_str(),
                &r.path.display().to_string(),
                &r.label.to_string(),
                r.split.as_str(),
            ])
            .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::ManifestFormat {
            record: 0,
            msg: format!("{other:?}"),
        },
    }
}

fn is_jsonl(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("ndjson") | Some("json")
    )
}

/// Resolves a manifest path entry relative to the manifest's own directory.
fn resolve_path(base: Option<&Path>, raw: &str) -> PathBuf {
    let p = PathBuf::from(raw);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    }
}

/// Loads `key,path,label,split` records from CSV or JSON-Lines (detected by
/// extension). Relative sample paths are resolved against the manifest's
/// directory; duplicate keys, non-binary labels, and unknown split tokens
/// are rejected.
pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let base = path.parent().map(Path::to_path_buf);
    let records = if is_jsonl(path) {
        load_manifest_jsonl(path, base.as_deref())?
    } else {
        load_manifest_csv(path, base.as_deref())?
    };
    if records.is_empty() {
        return Err(Error::ManifestFormat {
            record: 0,
            msg: "manifest contains no records".into(),
        });
    }
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    for r in &records {
        if !seen.insert(r.key.clone()) && !dups.contains(&r.key) {
            dups.push(r.key.clone());
        }
    }
    if !dups.is_empty() {
        return Err(Error::DuplicateKeys(dups));
    }
    Ok(CorpusManifest { records })
}

fn parse_label(raw: &str, record: usize) -> Result<u8> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::ManifestFormat {
            record,
            msg: format!("label must be 0 or 1, got {other:?}"),
        }),
    }
}

fn parse_split(raw: &str, record: usize) -> Result<Split> {
    Split::from_token(raw).ok_or_else(|| Error::ManifestFormat {
        record,
        msg: format!("unknown split token {raw:?} (expected TRAIN, TEST, or VALID)"),
    })
}

fn load_manifest_csv(path: &Path, base: Option<&Path>) -> Result<Vec<SampleRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let headers = reader.headers().map_err(|e| csv_io(path, e))?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::ManifestFormat {
                record: 0,
                msg: format!("missing column {name:?}"),
            })
    };
    let (ck, cp, cl, cs) = (col("key")?, col("path")?, col("label")?, col("split")?);
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let record = i + 1;
        let row = row.map_err(|e| csv_io(path, e))?;
        let get = |c: usize| -> Result<&str> {
            row.get(c).ok_or_else(|| Error::ManifestFormat {
                record,
                msg: "short row".into(),
            })
        };
        records.push(SampleRecord {
            key: get(ck)?.to_string(),
            path: resolve_path(base, get(cp)?),
            label: parse_label(get(cl)?, record)?,
            split: parse_split(get(cs)?, record)?,
        });
    }
    Ok(records)
}

fn load_manifest_jsonl(path: &Path, base: Option<&Path>) -> Result<Vec<SampleRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let record = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::ManifestFormat {
                record,
                msg: format!("invalid JSON: {e}"),
            })?;
        let field = |name: &str| -> Result<&serde_json::Value> {
            v.get(name).ok_or_else(|| Error::ManifestFormat {
                record,
                msg: format!("missing field {name:?}"),
            })
        };
        let as_text = |val: &serde_json::Value| -> String {
            match val {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            }
        };
        records.push(SampleRecord {
            key: as_text(field("key")?),
            path: resolve_path(base, &as_text(field("path")?)),
            label: parse_label(&as_text(field("label")?), record)?,
            split: parse_split(&as_text(field("split")?), record)?,
        });
    }
    Ok(records)
}

/// Dense per-sample feature rows in manifest order. `values` is row-major
/// `keys.len() × dim`; non-finite cells were zeroed at load and counted in
/// `imputed`.
#[derive(Clone, Debug)]
pub struct SideFeatureTable {
    pub keys: Vec<String>,
    pub feature_names: Vec<String>,
    pub values: Vec<f64>,
    pub dim: usize,
    pub imputed: usize,
}

impl SideFeatureTable {
    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.row(i)[j]).collect()
    }
}

/// Loads a side-feature table (CSV `key,<name>,...` or JSON-Lines objects
/// with the same fields; JSON columns are ordered alphabetically) and
/// reorders rows to manifest order. Every manifest key must be present.
pub fn load_side_features(path: &Path, manifest: &CorpusManifest) -> Result<SideFeatureTable> {
    let (names, mut by_key) = if is_jsonl(path) {
        load_side_jsonl(path)?
    } else {
        load_side_csv(path)?
    };
    let mut values = Vec::with_capacity(manifest.len() * names.len());
    let mut imputed = 0usize;
    for r in &manifest.records {
        let row = by_key.remove(&r.key).ok_or_else(|| {
            Error::SideFeatures(format!("no side-feature row for sample key {:?}", r.key))
        })?;
        for v in row {
            if v.is_finite() {
                values.push(v);
            } else {
                values.push(0.0);
                imputed += 1;
            }
        }
    }
    Ok(SideFeatureTable {
        keys: manifest.keys(),
        dim: names.len(),
        feature_names: names,
        values,
        imputed,
    })
}

type SideRows = (Vec<String>, HashMap<String, Vec<f64>>);

fn load_side_csv(path: &Path) -> Result<SideRows> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let headers = reader.headers().map_err(|e| csv_io(path, e))?.clone();
    let key_col = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("key"))
        .ok_or_else(|| Error::SideFeatures("missing column \"key\"".into()))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != key_col)
        .map(|(_, h)| h.to_string())
        .collect();
    let mut by_key: HashMap<String, Vec<f64>> = HashMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| csv_io(path, e))?;
        let key = row
            .get(key_col)
            .ok_or_else(|| Error::SideFeatures(format!("record {}: short row", i + 1)))?
            .to_string();
        let mut vals = Vec::with_capacity(names.len());
        for (c, cell) in row.iter().enumerate() {
            if c == key_col {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::SideFeatures(format!(
                    "record {}: non-numeric cell {:?} in column {:?}",
                    i + 1,
                    cell,
                    headers.get(c).unwrap_or("")
                ))
            })?;
            vals.push(v);
        }
        if by_key.insert(key.clone(), vals).is_some() {
            return Err(Error::SideFeatures(format!("duplicate key {key:?}")));
        }
    }
    Ok((names, by_key))
}

fn load_side_jsonl(path: &Path) -> Result<SideRows> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut names: Option<Vec<String>> = None;
    let mut by_key: HashMap<String, Vec<f64>> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Map<String, serde_json::Value> = serde_json::from_str(line)
            .map_err(|e| Error::SideFeatures(format!("record {}: invalid JSON: {e}", i + 1)))?;
        let key = match v.get("key") {
            Some(serde_json::Value::String(s)) => s.clone(),
            _ => {
                return Err(Error::SideFeatures(format!(
                    "record {}: missing string field \"key\"",
                    i + 1
                )))
            }
        };
        // serde_json maps iterate in sorted key order, so the column order
        // is alphabetical and stable across files.
        let mut row_names = Vec::new();
        let mut vals = Vec::new();
        for (name, value) in &v {
            if name == "key" {
                continue;
            }
            let num = value.as_f64().ok_or_else(|| {
                Error::SideFeatures(format!(
                    "record {}: non-numeric cell in field {name:?}",
                    i + 1
                ))
            })?;
            row_names.push(name.clone());
            vals.push(num);
        }
        match &names {
            None => names = Some(row_names),
            Some(expected) if *expected != row_names => {
                return Err(Error::SideFeatures(format!(
                    "record {}: field set differs from first record",
                    i + 1
                )))
            }
            _ => {}
        }
        if by_key.insert(key.clone(), vals).is_some() {
            return Err(Error::SideFeatures(format!("duplicate key {key:?}")));
        }
    }
    Ok((names.unwrap_or_default(), by_key))
}

/// Split-resolved, key-verified binding of matrix rows, labels, and side
/// features. Views borrow the sparse payload instead of copying it.
pub struct AlignedData<'a> {
    matrix: &'a OccurrenceMatrix,
    side: Option<&'a SideFeatureTable>,
    labels: Vec<u8>,
    train_idx: Vec<usize>,
    test_idx: Vec<usize>,
    valid_idx: Vec<usize>,
}

/// Verifies that matrix rows, manifest records, and side-feature rows agree
/// key-for-key in order, then exposes train/test/valid row views.
pub fn align<'a>(
    matrix: &'a OccurrenceMatrix,
    manifest: &CorpusManifest,
    side: Option<&'a SideFeatureTable>,
) -> Result<AlignedData<'a>> {
    if matrix.n_rows() != manifest.len() {
        return Err(Error::ShapeMismatch(format!(
            "matrix has {} rows but manifest has {} records",
            matrix.n_rows(),
            manifest.len()
        )));
    }
    for (i, (rid, rec)) in matrix.row_ids.iter().zip(&manifest.records).enumerate() {
        if rid != &rec.key {
            return Err(Error::Alignment {
                index: i,
                matrix_id: rid.clone(),
                manifest_key: rec.key.clone(),
            });
        }
    }
    if let Some(s) = side {
        if s.n_rows() != manifest.len() {
            return Err(Error::ShapeMismatch(format!(
                "side-feature table has {} rows but manifest has {} records",
                s.n_rows(),
                manifest.len()
            )));
        }
        for (i, (sk, rec)) in s.keys.iter().zip(&manifest.records).enumerate() {
            if sk != &rec.key {
                return Err(Error::Alignment {
                    index: i,
                    matrix_id: sk.clone(),
                    manifest_key: rec.key.clone(),
                });
            }
        }
    }
    if let Some(stored) = &matrix.labels {
        let manifest_labels = manifest.labels();
        if stored != &manifest_labels {
            return Err(Error::Validation(
                "matrix labels disagree with manifest labels".into(),
            ));
        }
    }
    Ok(AlignedData {
        matrix,
        side,
        labels: manifest.labels(),
        train_idx: manifest.indices_for(Split::Train),
        test_idx: manifest.indices_for(Split::Test),
        valid_idx: manifest.indices_for(Split::Valid),
    })
}

impl<'a> AlignedData<'a> {
    pub fn matrix(&self) -> &'a OccurrenceMatrix {
        self.matrix
    }

    pub fn side(&self) -> Option<&'a SideFeatureTable> {
        self.side
    }

    pub fn view(&self, split: Split) -> DatasetView<'a> {
        let idx = match split {
            Split::Train => &self.train_idx,
            Split::Test => &self.test_idx,
            Split::Valid => &self.valid_idx,
        };
        DatasetView {
            matrix: self.matrix,
            side: self.side,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            indices: idx.clone(),
        }
    }

    pub fn train(&self) -> DatasetView<'a> {
        self.view(Split::Train)
    }

    pub fn test(&self) -> DatasetView<'a> {
        self.view(Split::Test)
    }
}

/// One split's rows: sparse sub-signature columns plus optional dense side
/// rows, indexed without copying the matrix payload.
#[derive(Clone)]
pub struct DatasetView<'a> {
    matrix: &'a OccurrenceMatrix,
    side: Option<&'a SideFeatureTable>,
    pub indices: Vec<usize>,
    labels: Vec<u8>,
}

impl<'a> DatasetView<'a> {
    pub fn n_rows(&self) -> usize {
        self.indices.len()
    }

    pub fn n_sparse_cols(&self) -> usize {
        self.matrix.n_cols()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn matrix(&self) -> &'a OccurrenceMatrix {
        self.matrix
    }

    /// Sparse column indices of view row `i`.
    pub fn sparse_row(&self, i: usize) -> &'a [u32] {
        self.matrix.row(self.indices[i])
    }

    pub fn side_dim(&self) -> usize {
        self.side.map_or(0, |s| s.dim)
    }

    pub fn side_names(&self) -> &[String] {
        self.side.map_or(&[], |s| s.feature_names.as_slice())
    }

    pub fn side_row(&self, i: usize) -> Option<&'a [f64]> {
        self.side.map(|s| s.row(self.indices[i]))
    }

    pub fn prevalence(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.labels.iter().map(|&y| y as usize).sum::<usize>() as f64 / self.labels.len() as f64
    }
}
