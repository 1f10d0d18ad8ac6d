//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("cannot build {kind} on n={n} nodes: {reason}")]
    Construction {
        kind: String,
        n: usize,
        reason: String,
    },

    #[error("no connected graph sampled for n={n}, q={q} within {cap} attempts")]
    RetryCapExceeded { n: usize, q: f64, cap: usize },

    #[error("exhaustive enumeration refused: n={n} exceeds cap {cap}")]
    EnumerationCap { n: usize, cap: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("tape already consumed by a backward pass")]
    TapeConsumed,

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss((usize, usize)),

    #[error("optimizer step without populated gradients")]
    MissingGradients,

    #[error("unknown parameter {0:?}")]
    UnknownParameter(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("numerical failure in {method} at iteration {iteration}")]
    NumericalFailure {
        method: &'static str,
        iteration: usize,
    },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("model carries no ground truth")]
    MissingTruth,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
