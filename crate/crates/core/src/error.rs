use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("weight is not differentiable at {point:?}: {reason}")]
    Singularity { point: Vec<f64>, reason: String },

    #[error("start point {0:?} is outside the startable set")]
    NotStartable(Vec<f64>),

    #[error("quadrature did not converge (residual estimate {residual:e}): {context}")]
    QuadratureNonConvergence { residual: f64, context: String },

    #[error("non-integrable configuration: {0}")]
    NonIntegrable(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
