use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("transferability is undefined when the baseline accuracy is {acc_0}")]
    UndefinedScore { acc_0: f64 },

    #[error("dataset file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}: label column `{column}` not present in header", path.display())]
    MissingLabelColumn { path: PathBuf, column: String },

    #[error("{}: row {row}, column `{column}`: cannot parse `{value}` as a finite number", path.display())]
    ParseCell {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("{}: label column `{column}` must hold exactly two distinct values, found {found:?}", path.display())]
    LabelCardinality {
        path: PathBuf,
        column: String,
        found: Vec<String>,
    },

    #[error("{}: positive label `{label}` does not occur in column `{column}`", path.display())]
    MissingPositiveLabel {
        path: PathBuf,
        column: String,
        label: String,
    },

    #[error("{}: row {row} has {found} cells, header has {expected}", path.display())]
    RaggedRow {
        path: PathBuf,
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("registry: {0}")]
    Registry(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
