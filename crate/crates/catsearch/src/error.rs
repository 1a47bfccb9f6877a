//! Crate-wide error type.

use thiserror::Error;

/// Unified error for every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An operation that needs at least one candidate got none.
    #[error("candidate set is empty")]
    EmptyCandidateSet,

    /// A charge would push the ledger past its cap.
    #[error("budget exhausted: requested {requested} path(s) with {remaining} remaining")]
    BudgetExhausted { requested: u64, remaining: u64 },

    /// A step was appended to (or sampled for) a path that already has an answer.
    #[error("path is already terminal")]
    PathTerminal,

    /// Finalization was attempted before the path reached full depth.
    #[error("path has {len} step(s) but the task depth is {depth}")]
    PathNotComplete { len: usize, depth: usize },

    /// A synthetic-environment operation met a step with no quality value.
    #[error("path contains a non-synthetic step (no quality value)")]
    NonSyntheticStep,

    /// Vector or matrix dimensions disagree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A gradient or parameter became non-finite during training.
    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    /// Sparsity or parameter statistics were requested for an empty model.
    #[error("model has no parameters")]
    EmptyModel,

    /// A bound needs a sample size of at least 2.
    #[error("invalid sample size n = {0}; bounds need n >= 2")]
    InvalidSampleSize(u64),

    /// A prior mass outside (0, 1].
    #[error("invalid prior mass {0}; must lie in (0, 1]")]
    InvalidPrior(f64),

    /// Inputs outside the domain where the quantity is defined.
    #[error("degenerate inputs: {0}")]
    DegenerateInputs(String),

    /// The requested coverage level cannot be met by any coverage probability.
    #[error("vacuous bound: 1 - delta - misrank term is not positive")]
    VacuousBound,

    /// A configuration file or parameter failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// An aggregation step received no rows.
    #[error("no result rows")]
    EmptyResults,

    /// The remote backend could not be reached after retries.
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    /// The remote backend answered with a malformed or out-of-contract body.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A forward cache was reused after the network's parameters changed.
    #[error("stale forward cache: network parameters changed since the forward pass")]
    StaleCache,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
