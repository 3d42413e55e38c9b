//! Crate-wide error type.
//!
//! Every failure mode that callers are expected to branch on gets its own
//! variant; file-format problems are kept distinct (version, truncation,
//! checksum, framing) so tooling can report precisely what went wrong.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no decodable string definitions found under the given rule roots")]
    EmptyCatalog,

    #[error("catalog file is truncated or empty: {0}")]
    CatalogTruncated(String),

    #[error("catalog version {found} is not supported (expected {expected})")]
    CatalogVersion { found: u32, expected: u32 },

    #[error("catalog framing error at line {line}: {msg}")]
    CatalogFormat { line: usize, msg: String },

    #[error("matrix file does not start with the expected magic")]
    MatrixMagic,

    #[error("matrix version {found} is not supported (expected {expected})")]
    MatrixVersion { found: u32, expected: u32 },

    #[error("matrix file is truncated: need {needed} bytes, have {have}")]
    MatrixTruncated { needed: u64, have: u64 },

    #[error("matrix checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    MatrixChecksum { stored: u32, computed: u32 },

    #[error("matrix framing error: {0}")]
    MatrixFormat(String),

    #[error("manifest error at record {record}: {msg}")]
    ManifestFormat { record: usize, msg: String },

    #[error("manifest contains duplicate keys: {0:?}")]
    DuplicateKeys(Vec<String>),

    #[error("side feature table error: {0}")]
    SideFeatures(String),

    #[error("row alignment mismatch at index {index}: matrix row id {matrix_id:?} vs manifest key {manifest_key:?}")]
    Alignment {
        index: usize,
        matrix_id: String,
        manifest_key: String,
    },

    #[error("{} corpus files are missing: {}", .0.len(), join_paths(.0))]
    MissingFiles(Vec<PathBuf>),

    #[error("catalog entry {id:016x} has no fully fixed byte to anchor on")]
    NoFixedBytes { id: u64 },

    #[error("chunk size {chunk_size} is smaller than the longest pattern span {needed}")]
    ChunkTooSmall { chunk_size: usize, needed: usize },

    #[error("labels must contain both classes (got a single class)")]
    SingleClass,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("labels are required but absent")]
    MissingLabels,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error("workdir is locked by another run (lock file {0} exists)")]
    WorkdirLocked(PathBuf),

    #[error("output {0} already exists (pass force to overwrite)")]
    OutputExists(PathBuf),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

fn join_paths(paths: &[PathBuf]) -> String {
    let mut shown: Vec<String> = paths
        .iter()
        .take(10)
        .map(|p| p.display().to_string())
        .collect();
    if paths.len() > shown.len() {
        shown.push(format!("... and {} more", paths.len() - shown.len()));
    }
    shown.join(", ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
