use thiserror::Error;

/// Errors produced by the library. The CLI maps these onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid turn: {0}")]
    InvalidTurn(String),

    #[error("unknown role {0}")]
    UnknownRole(usize),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("environment error: {0}")]
    Environment(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("episode {0} not found")]
    EpisodeNotFound(u64),

    #[error("external evaluator: {0}")]
    Evaluator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Validation and usage problems are distinguished from runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidInput(_) | Error::EpisodeNotFound(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
