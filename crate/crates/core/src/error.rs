//! Crate-wide error type.

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A numeric argument fell outside an operation's domain.
    #[error("domain error: argument `{arg}` = {value}: {reason}")]
    Domain {
        arg: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// Input that could not be decoded at all.
    #[error("parse error at record {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Decoded input that violates a schema invariant.
    #[error("validation error at record {line}: {msg}")]
    Validation { line: usize, msg: String },

    /// A record group whose constant-per-group fields disagree.
    #[error("inconsistent group [{key}]: {msg}")]
    Integrity { key: String, msg: String },

    /// Fewer observations than free parameters.
    #[error("underdetermined fit: {points} points for {params} parameters")]
    Underdetermined { points: usize, params: usize },

    /// An operation that needs data received none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Invalid bounds, optimizer settings, or tolerances.
    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialize(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Serialize(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Serialize(e.to_string())
    }
}
