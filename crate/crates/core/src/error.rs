use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum OcanError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("log of non-positive value {value} at index {index}")]
    LogDomain { value: f64, index: usize },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("expected a scalar loss, got shape {0:?}")]
    NotScalar((usize, usize)),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-deterministic loss function: {first} then {second}")]
    NonDeterministic { first: f64, second: f64 },

    #[error("optimizer state does not match parameters: {0}")]
    StateMismatch(String),

    #[error("training diverged at epoch {epoch}: {what} became non-finite")]
    Diverged { epoch: usize, what: &'static str },

    #[error("{path}: row {row}: {msg}")]
    Parse {
        path: String,
        row: usize,
        msg: String,
    },

    #[error("user {user}: {msg}")]
    Sequence { user: String, msg: String },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("incompatible checkpoint: {0}")]
    Checkpoint(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, OcanError>;
