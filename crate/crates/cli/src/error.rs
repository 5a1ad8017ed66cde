use std::path::{Path, PathBuf};

use stacked_rmst::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Data {
        path: PathBuf,
        #[source]
        source: CoreError,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 for usage, config and I/O problems, 2 for bad data, 3 for numeric
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Io { .. } | Self::Json(_) => 1,
            Self::Csv(_) => 2,
            // anything wrong with the contents of a data file is a data error
            Self::Data { source, .. } => match core_code(source) {
                1 if !matches!(source, CoreError::Io(_)) => 2,
                c => c,
            },
            Self::Core(source) => core_code(source),
        }
    }
}

fn core_code(e: &CoreError) -> i32 {
    match e {
        CoreError::InvalidInput(_) | CoreError::Io(_) => 1,
        CoreError::Validation(_)
        | CoreError::NegativeTime(_)
        | CoreError::NoEvents
        | CoreError::EmptyArm(_)
        | CoreError::DimensionMismatch { .. }
        | CoreError::TooFewRecords { .. }
        | CoreError::ConstantColumn(_)
        | CoreError::InsufficientDistinctValues { .. }
        | CoreError::Csv(_) => 2,
        CoreError::NonConvergence(_)
        | CoreError::MonotoneLikelihood(_)
        | CoreError::AllCandidatesExcluded
        | CoreError::RedrawCapExceeded(_) => 3,
    }
}
