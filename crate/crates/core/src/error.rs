//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A dataset file is missing, unreadable or fails checksum verification.
    #[error("ingest error in {}: {reason}", path.display())]
    Ingest { path: PathBuf, reason: String },

    /// A file parsed but its layout is not what was expected.
    #[error("format error in {}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    /// A value lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Tensor or signal shapes do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Inputs violate an operation's contract (mismatched bundle, sizes, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// The source codec could not fit an image into the requested budget.
    #[error("compression error: {0}")]
    Compression(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch} (learning rate {learning_rate}): {detail}")]
    Divergence {
        epoch: usize,
        learning_rate: f64,
        detail: String,
    },

    /// A results file line failed validation.
    #[error("results file {}, line {line}: {reason}", path.display())]
    Results {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    /// Plot request could not be satisfied.
    #[error("plot error: {0}")]
    Plot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
