use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("input index {index} out of range for p = {p}")]
    IndexOutOfRange { index: usize, p: usize },

    #[error("point {0:?} lies outside the unit cube")]
    OutsideCube(Vec<f64>),

    #[error("invalid interval [{lo}, {hi})")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("malformed ensemble file at line {line}: {msg}")]
    Malformed { line: usize, msg: String },

    #[error("unsupported ensemble format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("input {0} is already a member of the subset")]
    IndexInSubset(usize),

    #[error("{what} limit exceeded: {value} > {limit}")]
    LimitExceeded {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("ensemble holds no posterior draws")]
    EmptyEnsemble,

    #[error("unsupported reference table: {0}")]
    UnsupportedReference(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("chain state inconsistent: {0}")]
    ChainInconsistent(String),

    #[error("CSV error in {path}: {msg}")]
    Csv { path: PathBuf, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::Json(_) | Error::ChainInconsistent(_)
        )
    }
}
