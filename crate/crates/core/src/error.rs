use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A call that violates an operation's contract (stepping a terminal
    /// state, extending a path past a terminal node, ...).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("history has zero likelihood under the model: {0}")]
    ZeroLikelihood(String),

    #[error("no instance in the set is compatible with the history")]
    NoCompatibleInstance,

    #[error("node budget exceeded: {expanded} nodes expanded (budget {budget})")]
    BudgetExceeded { expanded: u64, budget: u64 },

    #[error("instance universe too large: {count} distinguishable instances (cap {cap})")]
    UniverseTooLarge { count: usize, cap: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
