//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MathError {
    #[error("embedding dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine distance undefined for a zero vector")]
    ZeroVector,
    #[error("probability must lie in (0, 1]")]
    OutOfRange,
    #[error("embedding components must be finite")]
    NonFinite,
    #[error("mean of an empty vector set")]
    EmptyMean,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("query of {len} tokens exceeds maximum context length {max}")]
    ContextTooLong { len: usize, max: usize },
    #[error("token id {0} outside vocabulary of size {1}")]
    InvalidTokenId(u32, usize),
    #[error("mask placeholder missing at target position {0}")]
    TargetNotMasked(usize),
    #[error("malformed model bundle: {0}")]
    Bundle(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("word {0} is punctuation and carries no probability")]
    PunctuationWord(usize),
    #[error("no probability supplied for word {0}")]
    MissingProbability(usize),
    #[error("threshold must lie in (0, 1]")]
    BadThreshold,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("replacement {replacement:?} already maps back to {existing:?}")]
    Collision {
        replacement: String,
        existing: String,
    },
    #[error("replacement equals its original {0:?}")]
    Identity(String),
    #[error("the removal sentinel cannot appear in a substitution table")]
    Sentinel,
    #[error("malformed substitution table: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("decision and gold word universes differ: {0}")]
    CoverageMismatch(String),
    #[error("thresholds must be sorted strictly ascending")]
    UnsortedThresholds,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("conversation {conversation} failed at turn {turn}: {source}")]
    Turn {
        conversation: String,
        turn: usize,
        #[source]
        source: Box<PipelineError>,
    },
}
