use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("level {level} outside 1..={horizon}")]
    InvalidLevel { level: usize, horizon: usize },
    #[error("operation not permitted in {mode} access: {detail}")]
    WrongMode { mode: &'static str, detail: String },
    #[error("state {state} invalid at level {level}")]
    InvalidState { level: usize, state: usize },
    #[error("action not valid at level {level}, state {state}")]
    InvalidAction { level: usize, state: usize },
    #[error("empty action set at level {level}, state {state}")]
    EmptyActionSet { level: usize, state: usize },
    #[error("enumeration size {size} exceeds cap {cap}")]
    EnumerationCap { size: u64, cap: u64 },
    #[error("no feature preimage available at level {level}")]
    PreimageUnavailable { level: usize },
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("empty sample batch")]
    EmptyBatch,
    #[error("matrix columns not orthonormal (Gram deviation {0:e})")]
    NonOrthonormal(f64),
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("missing subspace V")]
    MissingSubspace,
    #[error("recovery failed at level {level:?}: {reason}")]
    Recovery { level: Option<usize>, reason: String },
    #[error("acceptance too low: {accepted} of {proposals} proposals")]
    AcceptanceTooLow { accepted: u64, proposals: u64 },
    #[error("insufficient samples: {n} < {needed}")]
    InsufficientSamples { n: usize, needed: usize },
    #[error("no family member fits the samples at level {level}")]
    NoSolution { level: usize },
    #[error("size cap exceeded: {0}")]
    SizeCap(String),
}

pub type Result<T> = std::result::Result<T, Error>;
