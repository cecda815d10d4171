//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dataset handling, training and inference.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input data (bad CSV, ragged grids,
    /// mismatched dimensions, degenerate classes).
    #[error("data error: {0}")]
    Data(String),

    /// Invalid configuration or unusable parameter combination.
    #[error("config error: {0}")]
    Config(String),

    /// Numerical failure during training or inference (underflow, singular
    /// system, non-finite intermediate).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
