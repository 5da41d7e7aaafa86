use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the classification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("cycle in label hierarchy through {0:?}")]
    Cycle(String),
    #[error("label {child:?} has two parents: {first:?} and {second:?}")]
    MultiParent {
        child: String,
        first: String,
        second: String,
    },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("unknown document id {0:?}")]
    UnknownId(String),
    #[error("empty label tree")]
    EmptyTree,

    #[error("invalid feature module: {0}")]
    InvalidFeatureSpec(String),
    #[error("no terms survive vocabulary construction")]
    EmptyVocabulary,

    #[error("label {label:?} has {positives} positive and {negatives} negative examples")]
    DegenerateLabel {
        label: String,
        positives: usize,
        negatives: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("scores are constant; min-max normalization is undefined")]
    ConstantScores,
    #[error("score matrix has no rows")]
    EmptyScores,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("quadratic fit needs at least 3 distinct thresholds, got {0}")]
    DegenerateFit(usize),
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("model format: {0}")]
    ModelFormat(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from numerical degeneracy rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateLabel { .. }
                | Error::ConstantScores
                | Error::EmptyScores
                | Error::DegenerateFit(_)
                | Error::EmptyVocabulary
                | Error::InsufficientData(_)
        )
    }
}
