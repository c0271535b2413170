use std::path::PathBuf;

use thiserror::Error;

use crate::scenario::Violation;

pub type Result<T, E = DispatchError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("cannot read or write {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("non-binary correctness entry {value:?} at row {row}, column {col}")]
    NonBinaryCorrectness {
        row: usize,
        col: usize,
        value: String,
    },

    #[error("non-finite feature at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },

    #[error("malformed number {value:?} in {what}")]
    Parse { what: String, value: String },

    #[error("duplicate model name {0:?}")]
    DuplicateModelName(String),

    #[error("need at least 2 models, found {0}")]
    TooFewModels(usize),

    #[error("scenario failed validation: {}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("invalid split fractions {0:?}: each must be positive and they must sum to 1")]
    InvalidFractions([f64; 3]),

    #[error("unknown split {0:?}")]
    UnknownSplit(String),

    #[error("class {0} has zero samples")]
    ZeroClassCount(usize),

    #[error("non-finite logit at row {row}, column {col}")]
    NonFiniteLogit { row: usize, col: usize },

    #[error("empty training data")]
    EmptyTrainingData,

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("penalty {value} out of range [0,100]")]
    PenaltyOutOfRange { value: f64 },

    #[error("reference point lies inside the front region")]
    ReferenceInsideFront,

    #[error("genome length {found} does not match {expected} for {models} models")]
    GenomeLength {
        expected: usize,
        found: usize,
        models: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl DispatchError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DispatchError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            DispatchError::Manifest { .. }
                | DispatchError::DimensionMismatch { .. }
                | DispatchError::NonBinaryCorrectness { .. }
                | DispatchError::NonFiniteFeature { .. }
                | DispatchError::Parse { .. }
                | DispatchError::DuplicateModelName(_)
                | DispatchError::TooFewModels(_)
                | DispatchError::Validation(_)
                | DispatchError::InvalidFractions(_)
                | DispatchError::UnknownSplit(_)
                | DispatchError::PenaltyOutOfRange { .. }
                | DispatchError::GenomeLength { .. }
                | DispatchError::Config(_)
        )
    }
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
