use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] lfc_core::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("slope fit needs at least 3 distinct sizes, got {0}")]
    TooFewPoints(usize),
    #[error("unknown operator {0:?}")]
    UnknownOperator(String),
    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, BenchError>;
