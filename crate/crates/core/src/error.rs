//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any part of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("score must be finite, got {0}")]
    NonFiniteScore(f64),

    #[error("confidence level must lie strictly inside (0, 1), got {0}")]
    InvalidConfidenceLevel(f64),

    #[error("smoothing draw tau must lie in [0, 1], got {0}")]
    InvalidTau(f64),

    #[error("rate must lie strictly inside (0, 1), got {0}")]
    InvalidRate(f64),

    #[error("feature dimensionality mismatch: expected {expected}, got {got}{}", at.as_deref().map(|s| format!(" ({s})")).unwrap_or_default())]
    DimensionMismatch {
        expected: usize,
        got: usize,
        at: Option<String>,
    },

    #[error("{0} must not be empty")]
    EmptyInput(&'static str),

    #[error("example {0} has no target but one is required here")]
    MissingTarget(String),

    #[error("example {id}: expected a {expected} target")]
    TargetKindMismatch { id: String, expected: &'static str },

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("class {label:?} has {size} training examples, need at least {needed}")]
    ClassTooSmall {
        label: String,
        size: usize,
        needed: usize,
    },

    #[error("training set must contain at least two classes")]
    SingleClass,

    #[error("no stored score for example {id:?}, label {label:?}")]
    MissingScore { id: String, label: String },

    #[error("no stored prediction for example {id:?}")]
    MissingPrediction { id: String },

    #[error("sigma_hat must be positive, got {got} for example {id:?}")]
    NonPositiveSigma { id: String, got: f64 },

    #[error("split fractions must be positive and sum to at most 1 (got {0})")]
    InvalidSplitFractions(String),

    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("missing mandatory column {0:?}")]
    MissingColumn(String),

    #[error("duplicate example id {0:?}")]
    DuplicateId(String),

    #[error("taxonomy error: {0}")]
    Taxonomy(String),

    #[error("sequence lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{0}")]
    Unsupported(String),

    #[error("predictor is not fitted: {0}")]
    Unfitted(&'static str),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
