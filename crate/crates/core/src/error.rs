use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vector dimension must be positive")]
    EmptyVector,

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("negative variance {value} at coordinate {index}")]
    NegativeVariance { index: usize, value: f64 },

    #[error("invalid hyperparameter {name} = {value}: {reason}")]
    InvalidHyperParam {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed row {row}: column `{column}` holds `{value}`")]
    MalformedRow {
        row: usize,
        column: String,
        value: String,
    },

    #[error("unknown label column `{0}`")]
    UnknownLabelColumn(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("no dataset: problem is an analytic landscape")]
    NoDataset,

    #[error("empty partition")]
    EmptyPartition,

    #[error("empty schedule: epochs must be positive")]
    EmptySchedule,

    #[error("all runs diverged; grid points tried: {points:?}")]
    AllDiverged { points: Vec<f64> },

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("{path}: {message}")]
    Record { path: String, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
