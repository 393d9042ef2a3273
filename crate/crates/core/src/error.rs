use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("ill-posed gradient check: {0}")]
    IllPosedCheck(String),

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the error stems from user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::Config(_)
                | Error::NotFound(_)
                | Error::Parse { .. }
                | Error::EmptyDataset(_)
        )
    }
}
