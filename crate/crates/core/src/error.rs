use thiserror::Error;

/// Errors raised by distribution, loss, solver and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("size-weighting is not integrable: {0}")]
    NonIntegrable(String),

    #[error("moment is undefined: {0}")]
    UndefinedMoment(String),

    #[error("expected loss is undefined: {0}")]
    UndefinedRisk(String),

    #[error("lagrange multiplier {lambda} outside admissible interval {bounds}")]
    InfeasibleMultiplier { lambda: f64, bounds: String },

    #[error("matrix decomposition failed: {0}")]
    Decomposition(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate total: variance of the total is {0}")]
    DegenerateTotal(f64),

    #[error("pointwise loss undefined in dimension {dimension}: {reason}")]
    PointwiseLoss { dimension: usize, reason: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
