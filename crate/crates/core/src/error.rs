use alloc::string::String;

/// Errors produced by the simulator core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("too few updates: got {got}, rule needs at least {needed}")]
    TooFewUpdates { got: usize, needed: usize },

    #[error("bulyan selection size m={m} exceeds update count n={n}")]
    SelectionTooLarge { m: usize, n: usize },

    #[error("non-finite model parameters")]
    NonFiniteParams,

    #[error("feature length {got} does not match model input dimension {expected}")]
    FeatureLength { got: usize, expected: usize },

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("training diverged for client {client} in round {round}")]
    Divergence { client: u64, round: u64 },

    #[error("trigger of size {size} does not fit a {height}x{width} grid")]
    TriggerTooLarge {
        size: usize,
        height: usize,
        width: usize,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("pool {pool} out of range for {num_pools} pools")]
    PoolOutOfRange { pool: usize, num_pools: usize },

    #[error("sample size {requested} exceeds pool size {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("round {round}: every pool candidate was disqualified (non-finite metric)")]
    AllCandidatesDisqualified { round: u64 },

    #[error("nonce space exhausted at difficulty {difficulty}")]
    NonceExhausted { difficulty: u32 },

    #[error("chain invalid at block {index}: {reason}")]
    InvalidChain { index: usize, reason: &'static str },

    #[error("malformed block encoding: {0}")]
    Decode(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
