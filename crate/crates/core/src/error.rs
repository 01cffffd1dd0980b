use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by the stage that raises them; [`Error::category`]
/// collapses them into the coarse classes used for process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    // -- ingestion -------------------------------------------------------
    #[error("{path}: missing column `{name}`")]
    MissingColumn { path: PathBuf, name: String },
    #[error("{path}:{line}: {reason}")]
    RowParse {
        path: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("{0}: file is empty (a header row is required)")]
    EmptyFile(PathBuf),
    #[error("cohort has no clinical records")]
    EmptyCohort,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    // -- statistics / preprocessing -------------------------------------
    #[error("need at least {needed} observed values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("column has zero variance")]
    ZeroVariance,
    #[error("non-positive input {0} for a positive-domain transform")]
    NonPositiveInput(f64),
    #[error("column `{0}` has no observed values")]
    AllMissingColumn(String),
    #[error("matrix has a row or column without observed entries")]
    NoObservedEntries,
    #[error("columns `{0}` and `{1}` share fewer than two observed rows")]
    InsufficientOverlap(String, String),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("column layout does not match the fitted preprocessor: {0}")]
    ColumnMismatch(String),

    // -- supervised set --------------------------------------------------
    #[error("no (input, target) visit pairs for horizon {horizon} months")]
    NoPairsProduced { horizon: u32 },
    #[error("need at least {needed} patients to split, got {got}")]
    TooFewPatients { needed: usize, got: usize },

    // -- numerics ----------------------------------------------------------
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("batch norm in training mode needs batch >= 2, got {0}")]
    BatchTooSmall(usize),
    #[error("dropout rate must lie in [0, 1), got {0}")]
    InvalidRate(f64),
    #[error("loss mask selects no entries")]
    EmptyMask,
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),
    #[error("invalid layer widths: {0}")]
    InvalidWidths(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no observed targets for `{0}`")]
    NoObservedTargets(String),
    #[error("gradient check failed: {0}")]
    GradCheckFailed(String),

    // -- io ----------------------------------------------------------------
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error class, mapped onto process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Numerical,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Usage => 1,
            ErrorCategory::Data => 2,
            ErrorCategory::Numerical => 3,
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            InvalidConfig(_) | InvalidWidths(_) | InvalidRate(_) => ErrorCategory::Usage,
            ZeroVariance | NonPositiveInput(_) | ShapeMismatch(_) | BatchTooSmall(_)
            | EmptyMask | NonFiniteLoss(_) | GradCheckFailed(_) => ErrorCategory::Numerical,
            _ => ErrorCategory::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
