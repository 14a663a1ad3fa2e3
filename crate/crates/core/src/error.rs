use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch { context: &'static str, expected: String, found: String },

    #[error("{what} index {index} out of range (limit {limit})")]
    OutOfRange { what: &'static str, index: usize, limit: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mask is empty")]
    EmptyMask,

    #[error("matrix is not symmetric (max |m - m^T| = {0:e})")]
    NotSymmetric(f64),

    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),

    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },

    #[error("{file}: {what} index {index} out of range for n = {n}")]
    IndexOutOfRange { file: String, what: String, index: i64, n: usize },

    #[error("count mismatch for {what}: meta.json says {expected}, data has {found}")]
    CountMismatch { what: &'static str, expected: usize, found: usize },

    #[error("splits overlap at node indices {indices:?}")]
    OverlappingSplits { indices: Vec<usize> },

    #[error("node {node} in split {split} has no valid label")]
    UnlabeledSplitNode { node: usize, split: &'static str },

    #[error("graph with {n} nodes exceeds the supported size ({limit}); datasets of this scale are out of scope")]
    TooLarge { n: usize, limit: usize },

    #[error("bad container {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("{0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch { context, expected: expected.to_string(), found: found.to_string() }
    }
}
