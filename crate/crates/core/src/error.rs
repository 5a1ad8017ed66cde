use std::fmt;

use thiserror::Error;

/// A single invariant violation found while validating raw records.
#[derive(Debug, Clone, PartialEq)]
pub struct RowIssue {
    /// Zero-based record index.
    pub row: usize,
    pub field: String,
    pub message: String,
}

impl fmt::Display for RowIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {} field `{}`: {}", self.row, self.field, self.message)
    }
}

/// Every violation found in a batch of records, in row order.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationErrors(pub Vec<RowIssue>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} invalid value(s)", self.0.len())?;
        for issue in &self.0 {
            write!(f, "; {issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sample: {0}")]
    Validation(#[from] ValidationErrors),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),

    #[error("no events in the data")]
    NoEvents,

    #[error("arm {0} has no records")]
    EmptyArm(u8),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("design column {0} is constant")]
    ConstantColumn(usize),

    #[error("need at least {needed} distinct values, found {found}")]
    InsufficientDistinctValues { needed: usize, found: usize },

    #[error("Newton iterations did not converge within {0} iterations")]
    NonConvergence(usize),

    #[error("monotone likelihood: a coefficient exceeded {0} in absolute value")]
    MonotoneLikelihood(f64),

    #[error("every candidate model failed to fit")]
    AllCandidatesExcluded,

    #[error("bootstrap redraw cap of {0} exceeded; sample too degenerate")]
    RedrawCapExceeded(usize),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
