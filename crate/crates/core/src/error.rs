use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    /// The complement of a fold has no source units to fit on.
    #[error("fold {fold} cannot be fit: {reason}")]
    UnfittableFold { fold: usize, reason: String },

    /// A fold lacks source or target units.
    #[error("fold {fold} is degenerate ({n_source} source, {n_target} target units)")]
    DegenerateFold {
        fold: usize,
        n_source: usize,
        n_target: usize,
    },

    #[error("likelihood-ratio bound {bound} is below the observed weight {observed}")]
    BoundViolation { bound: f64, observed: f64 },

    #[error("rejection sampling accepted no units")]
    EmptyAcceptance,

    #[error("all conformal weights are zero")]
    DegenerateWeights,

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Short machine-readable tag used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid-config",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::Domain(_) => "domain",
            Error::UnfittableFold { .. } => "unfittable-fold",
            Error::DegenerateFold { .. } => "degenerate-fold",
            Error::BoundViolation { .. } => "bound-violation",
            Error::EmptyAcceptance => "empty-acceptance",
            Error::DegenerateWeights => "degenerate-weights",
            Error::Internal(_) => "internal",
        }
    }
}
