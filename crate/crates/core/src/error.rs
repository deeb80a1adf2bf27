//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A row or line could not be parsed at all.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A row parsed but does not match the schema inferred from the file.
    #[error("schema error at line {line}: {msg}")]
    Schema { line: usize, msg: String },

    /// Parsed data violates a value-level invariant (NaN, infinity).
    #[error("data error at line {line}: {msg}")]
    Data { line: usize, msg: String },

    /// Caller passed arguments that violate an operation's preconditions.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A value is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Array shapes do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A non-finite value appeared during network evaluation.
    #[error("non-finite activation in layer {layer}: {msg}")]
    Numeric { layer: String, msg: String },

    /// Checkpoint or artifact file is corrupt or has the wrong format.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable tag for CLI error envelopes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Schema { .. } => "schema",
            Error::Data { .. } => "data",
            Error::Argument(_) => "argument",
            Error::Domain(_) => "domain",
            Error::Shape(_) => "shape",
            Error::Numeric { .. } => "numeric",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
