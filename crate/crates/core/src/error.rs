use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{0} is not positive definite")]
    NotPositiveDefinite(String),

    #[error("unsupported dimension {dim} (maximum {max})")]
    UnsupportedDimension { dim: usize, max: usize },

    #[error("tail expectation diverges for nu = {0} (need nu > 1)")]
    DivergentTail(f64),

    #[error("total tail mass {0:e} underflows")]
    TailUnderflow(f64),

    #[error("numerical failure at t = {t}, state {state}: {reason}")]
    NumericalFailure {
        t: usize,
        state: usize,
        reason: String,
    },

    #[error("state {0} has vanishing responsibility")]
    DegenerateState(usize),

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("all {} restarts failed: {}", .0.len(), .0.join("; "))]
    FitFailed(Vec<String>),

    #[error("slab acceptance rate {0:e} is below 1e-6; widen the slab")]
    InfeasibleSlab(f64),

    #[error("subset value table is incomplete: {0}")]
    IncompleteTable(String),

    #[error("invalid input data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
