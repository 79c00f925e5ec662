use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{kind} index {index} out of range (size {len})")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        len: usize,
    },

    #[error("bridge user {0} has fewer than 5 interactions")]
    BridgeUserTooSparse(usize),

    #[error("user {0} has interacted with every item; no negative available")]
    ExhaustedNegatives(usize),

    #[error("forward trace does not match parameter shapes: {0}")]
    TraceMismatch(String),

    #[error("fixed-point propagation did not converge after {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },

    #[error("unknown feature {0}")]
    UnknownFeature(usize),

    #[error("AUC needs at least one positive and one negative score")]
    EmptySide,

    #[error("recall needs a nonempty relevant set")]
    EmptyRelevant,

    #[error("no bridge user has a nonempty test set")]
    NoTestUsers,

    #[error("degenerate input for paired t-test: {0}")]
    DegenerateInput(&'static str),

    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("{file}:{line}: dangling reference to unknown {kind} '{id}'")]
    DanglingReference {
        file: String,
        line: usize,
        kind: &'static str,
        id: String,
    },

    #[error("non-finite value detected: {0}")]
    NumericFailure(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
