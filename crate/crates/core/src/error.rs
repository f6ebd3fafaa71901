use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic in {path}: expected {expected:?}")]
    BadMagic { path: PathBuf, expected: &'static str },
    #[error("truncated payload in {path}")]
    Truncated { path: PathBuf },
    #[error("dimension/payload mismatch: header declares {declared} values, payload carries {found}")]
    PayloadMismatch { declared: usize, found: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("value {value} at index {index} outside [0, 255]")]
    OutOfRange { index: usize, value: f64 },
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("invalid phantom spec: {0}")]
    Phantom(String),
    #[error("volume has no brain area (all voxels are zero)")]
    EmptyBrain,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index out of range: {0}")]
    IndexRange(String),
    #[error("backward requires a scalar output, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("non-finite numeric value in {0}")]
    Numeric(String),
    #[error("invalid label {label} for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("cannot split: {0}")]
    Split(String),
    #[error("cannot sample: {0}")]
    Sample(String),
    #[error("corrupt checkpoint {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("checkpoint spec mismatch: {0}")]
    SpecMismatch(String),
    #[error("clustering: {0}")]
    Cluster(String),
    #[error("evaluation: {0}")]
    Eval(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures caused by numeric blow-up rather than bad input data.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::NonFinite { .. })
    }
}
