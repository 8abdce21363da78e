use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error("soft value iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("support of size {size} exceeds the exact oracle cap of {cap}")]
    SupportTooLarge { size: usize, cap: usize },

    #[error("ground cost is not a metric: {0}")]
    NotMetric(String),

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("divergence at step {step}: {what}")]
    Divergence { step: usize, what: String },

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
