use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("clip is silent after trimming")]
    EmptyAfterTrim,
    #[error("invalid audio clip: {0}")]
    InvalidClip(String),
    #[error("clip has {samples} samples, fewer than the {window} sample window")]
    ClipTooShort { samples: usize, window: usize },
    #[error("invalid STFT configuration: {0}")]
    InvalidStftConfig(String),
    #[error("demographic histogram is infeasible: {0}")]
    InfeasibleHistogram(String),
    #[error("invalid synthesis spec: {0}")]
    InvalidSynthesisSpec(String),
    #[error("pool cannot satisfy split: {0}")]
    InsufficientPool(String),
    #[error("invalid split spec: {0}")]
    InvalidSpec(String),
    #[error("invalid fold count k={k} for {n} items")]
    InvalidK { k: usize, n: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("batch has no normal-class samples for the bias phases")]
    EmptyConditionedBatch,
    #[error("roc-auc is undefined when only one class is present")]
    SingleClassInput,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = core::result::Result<T, Error>;
