use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid construction-time configuration (empty corpus, bad dims, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A numeric argument outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Malformed call-site input (length mismatches, empty batches).
    #[error("input error: {0}")]
    Input(String),

    #[error("ingestion error at line {line}: {reason}")]
    Ingestion { line: usize, reason: String },

    /// Transport failure that persisted through every retry.
    #[error("connectivity error: {0}")]
    Connectivity(String),

    /// The remote endpoint answered, but not in the expected shape.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
