use std::path::PathBuf;

use thiserror::Error;

/// Which binary artifact a format error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Embeddings,
    Checkpoint,
    Index,
}

impl std::fmt::Display for FileKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FileKind::Embeddings => "embedding store",
            FileKind::Checkpoint => "checkpoint",
            FileKind::Index => "index",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("zero-norm row {row} in {op}")]
    DegenerateRow { op: &'static str, row: usize },

    #[error("degenerate projected embedding for id {id:?}")]
    DegenerateId { id: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad magic in {kind}: expected {expected:?}, found {found:?}")]
    BadMagic {
        kind: FileKind,
        expected: [u8; 4],
        found: Vec<u8>,
    },

    #[error("unsupported {kind} version {found} (expected {expected})")]
    UnsupportedVersion {
        kind: FileKind,
        expected: u32,
        found: u32,
    },

    #[error("truncated {kind}: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        kind: FileKind,
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("{kind} id block mismatch: header declares {declared} ids, {detail}")]
    IdCountMismatch {
        kind: FileKind,
        declared: u64,
        detail: String,
    },

    #[error("{kind} shape mismatch against header: {0}", kind = FileKind::Checkpoint)]
    CheckpointShape(String),

    #[error("malformed {kind}: {detail}")]
    Malformed { kind: FileKind, detail: String },

    #[error("manifest line {line}: {detail}")]
    Manifest { line: usize, detail: String },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("index fingerprint {index} does not match model fingerprint {model}")]
    FingerprintMismatch { index: String, model: String },

    #[error("non-finite loss at step {step} (epoch {epoch}): {value}")]
    Divergence { step: u64, epoch: usize, value: f64 },

    #[error("metrics: {0}")]
    Metrics(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
