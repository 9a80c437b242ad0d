use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the learner, its solvers and its file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}:{line}: invalid label {label:?} (expected one of 0, 1, -1, +1)")]
    Label {
        path: PathBuf,
        line: usize,
        label: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("index {index} out of range (< {bound})")]
    Index { index: usize, bound: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("kernel {spec} is declared positive semi-definite but K(x_{index}, x_{index}) = {value}")]
    PsdViolation {
        spec: String,
        index: usize,
        value: f64,
    },

    #[error("matrix is not symmetric: |G[{i}][{j}] - G[{j}][{i}]| = {diff:e}")]
    Symmetry { i: usize, j: usize, diff: f64 },

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model extraction error: {0}")]
    Extraction(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("merge error: {0}")]
    Merge(String),

    #[error("harness error: {0}")]
    Harness(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn file_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::File { path, source }
}
