use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rank class: {0}")]
    InvalidClass(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("objective word `{0}` is not reachable from the moment-matrix index")]
    MissingWord(String),

    #[error("sample stream exhausted after {drawn} draws with {accepted} basis elements")]
    StreamExhausted {
        drawn: usize,
        accepted: usize,
        partial: Box<crate::basis::BasisResult>,
    },

    #[error("degenerate scenario: {0}")]
    Degenerate(String),

    #[error("non-Hermitian objective")]
    NonHermitianObjective,

    #[error("refusing oversized computation: {0}")]
    TooLarge(String),

    #[error("not expressible with commuting scalars: {0}")]
    NotClassical(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown verification suite `{0}`")]
    UnknownSuite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
