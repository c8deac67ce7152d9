use std::path::PathBuf;

use thiserror::Error;

/// Failure of a CLI or file-format operation.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sand_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: row {row}, column {column:?}: cannot parse {value:?} as a number", path.display())]
    Parse {
        path: PathBuf,
        /// 1-based data row, not counting the header.
        row: usize,
        column: String,
        value: String,
    },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{}: no data rows", path.display())]
    EmptyDataset { path: PathBuf },
    #[error("{0}")]
    Config(String),
}

impl CliError {
    /// 3 for numeric failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numeric() => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
