//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by dataset generation, training, and metric evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix or vector had the wrong length along some axis.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A configuration value is outside its legal range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Runtime input violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The training loss left the finite range (divergence).
    #[error("non-finite loss {value} at iteration {iteration}")]
    NonFiniteLoss { iteration: u64, value: f64 },

    /// A CSV file could not be written or parsed.
    #[error("{path}: {message}")]
    Csv { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
