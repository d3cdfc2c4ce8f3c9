use thiserror::Error;

/// Errors produced by the model-features library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid format: {0}")]
    Format(String),

    #[error(
        "iteration did not converge after {iterations} iterations (last change {last_delta:e})"
    )]
    NonConvergence {
        iterations: usize,
        last_delta: f64,
        last_iterate: Vec<f64>,
    },

    #[error("error bound invalid: feature transition norm {max_norm} exceeds 1")]
    BoundInvalid { max_norm: f64 },

    #[error("matrix is numerically singular (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("training diverged at step {step}: non-finite parameter")]
    Diverged { step: usize },

    #[error("degenerate clustering: {distinct} distinct rows for {k} clusters")]
    DegenerateClustering { distinct: usize, k: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
