use alloc::string::String;

/// Errors raised by the core pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in trajectory `{id}` step {step}: expected {expected}, got {got}")]
    DimensionMismatch {
        id: String,
        step: usize,
        expected: usize,
        got: usize,
    },
    #[error("unknown quality tier `{0}`")]
    UnknownTier(String),
    #[error("invalid tier ladder: {0}")]
    InvalidLadder(String),
    #[error("non-finite observation in trajectory `{0}`")]
    NonFinite(String),
    #[error("trajectory `{id}` has {len} steps, {needed} required")]
    TrajectoryTooShort { id: String, len: usize, needed: usize },
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty input")]
    EmptyInput,
    #[error("unknown trajectory id `{0}`")]
    UnknownId(String),
    #[error("label missing on trajectory `{0}`")]
    MissingLabel(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
