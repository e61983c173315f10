use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not positive definite (jitter escalated to {jitter:e})")]
    NotPsd { jitter: f64 },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point lies outside the domain")]
    OutOfDomain,

    #[error("leave-one-out bandwidth needs at least 2 anchors (got {0}); use a fixed bandwidth instead")]
    TooFewAnchors(usize),

    #[error("degenerate anchors: the leave-one-out objective is unbounded on the search interval")]
    DegenerateAnchors,

    #[error("a duel needs two distinct designs")]
    DegenerateDuel,

    #[error("line search failed at iteration {iteration}: objective {objective}, gradient norm {grad_norm:e}")]
    LineSearchFailed {
        iteration: usize,
        objective: f64,
        grad_norm: f64,
    },

    #[error("evidence matrix I + LΛ is indefinite (smallest eigenvalue {min_eigenvalue:e})")]
    IndefiniteEvidence { min_eigenvalue: f64 },

    #[error("every probed hyperparameter failed to evaluate")]
    SearchFailed,

    #[error("no queried points yet")]
    EmptyHistory,

    #[error("oracle sampling acceptance rate {rate} is below 1%; the oracle is badly placed for the domain")]
    OracleRejection { rate: f64 },
}
