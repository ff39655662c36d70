use thiserror::Error;

/// Errors produced by every analysis stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    /// The input does not have the expected layout (wrong header, missing table).
    #[error("format error: {0}")]
    Format(String),

    /// A single data row could not be accepted.
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The operation declines to run on this input.
    #[error("refused: {0}")]
    Refused(String),

    /// The sample carries too little information for the requested estimate.
    #[error("degenerate sample: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
