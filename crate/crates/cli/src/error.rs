use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("bad config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{count} check(s) failed: {}", names.join(", "))]
    CheckFailed { count: usize, names: Vec<String> },
    #[error(transparent)]
    Core(#[from] lfc_core::Error),
    #[error(transparent)]
    Bench(#[from] lfc_bench::BenchError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 0 success, 1 usage, 2 check failure, 3 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 1,
            CliError::CheckFailed { .. } => 2,
            CliError::Io { .. } => 3,
            CliError::Core(lfc_core::Error::Io(_)) => 3,
            CliError::Bench(lfc_bench::BenchError::Io(_) | lfc_bench::BenchError::Csv(_)) => 3,
            CliError::Core(_) | CliError::Bench(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
