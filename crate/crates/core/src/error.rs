//! Crate-wide error type.
//!
//! Every failure carries a stable category string so callers (notably the
//! CLI) can emit machine-parsable one-line diagnostics.

use thiserror::Error;

/// Errors produced by any public operation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Two operands had incompatible shapes; names both shapes.
    #[error("shape mismatch in {op}: ({}x{}) vs ({}x{})", left.0, left.1, right.0, right.1)]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    /// A scalar or structural argument violated a precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A computation produced or received a non-finite value.
    #[error("non-finite value: {0}")]
    Numeric(String),

    /// A token index fell outside the embedding table.
    #[error("index {index} out of range: embedding table has {limit} rows")]
    Lookup { index: usize, limit: usize },

    /// An input file's header did not match any accepted schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A single malformed data row; names the 1-based line number.
    #[error("row error at line {line}: {message}")]
    Row { line: u64, message: String },

    /// A serialized artifact (checkpoint, vocabulary, sequence file) was
    /// corrupt or of an unsupported version.
    #[error("format error: {0}")]
    Format(String),

    /// An operation ran against missing or stale internal state.
    #[error("state error: {0}")]
    State(String),

    /// Two artifacts that must match (model vs vocabulary) do not.
    #[error("compatibility error: {0}")]
    Compatibility(String),

    /// A config file entry could not be parsed.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable single-token category, used by the CLI error surface.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Argument(_) => "argument",
            Error::Numeric(_) => "numeric",
            Error::Lookup { .. } => "lookup",
            Error::Schema(_) => "schema",
            Error::Row { .. } => "row",
            Error::Format(_) => "format",
            Error::State(_) => "state",
            Error::Compatibility(_) => "compatibility",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
