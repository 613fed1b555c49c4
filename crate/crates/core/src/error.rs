use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("gradient requested of a non-scalar output with shape {0:?}")]
    NonScalarOutput(Vec<usize>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sparsity {0} is outside [0, 1)")]
    InvalidSparsity(f64),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty sample{}", layer.map(|l| format!(" for layer {l}")).unwrap_or_default())]
    EmptySample { layer: Option<usize> },

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("bad magic number in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated file {path}: {detail}")]
    Truncated { path: PathBuf, detail: String },

    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("label {label} out of range at record {index}")]
    LabelOutOfRange { index: usize, label: u8 },

    #[error("training diverged at epoch {epoch}, step {step}: loss {loss} (initial {initial})")]
    Diverged {
        epoch: usize,
        step: usize,
        loss: f64,
        initial: f64,
    },

    #[error("snapshot checksum mismatch for {blob}")]
    ChecksumMismatch { blob: String },

    #[error("unsupported snapshot format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("snapshot blob {blob} truncated: manifest needs {needed} bytes, blob holds {actual}")]
    TruncatedBlob {
        blob: String,
        needed: usize,
        actual: usize,
    },

    #[error("malformed snapshot manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::ShapeMismatch {
        op,
        detail: detail.into(),
    }
}
