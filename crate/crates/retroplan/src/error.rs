//! Error type shared across the crate.
//!
//! Every fallible operation returns [`Error`]; the CLI maps each variant to a
//! short machine-parsable category on stderr.

use thiserror::Error;

/// Unified error for universe generation, game play, value learning,
/// dynamic programming and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// A generation or model parameter is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An input value (molecule, depth, file content) is unusable.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A size guard tripped (state-space blowup, not enough candidates, ...).
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Tanimoto similarity of two all-zero fingerprints is undefined.
    #[error("similarity undefined: both fingerprints have no bits set")]
    UndefinedSimilarity,

    /// A configuration key failed to parse or validate.
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    /// A synthesis tree violates the alternation / depth / leaf rules.
    #[error("malformed tree: {0}")]
    MalformedTree(String),

    /// A molecule or reaction was expected in a table but is missing.
    #[error("lookup failed: {0}")]
    Lookup(String),

    /// Network training diverged or was called with unusable data.
    #[error("training failed: {0}")]
    Training(String),

    /// A serialized artifact does not match its documented format.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short category tag used by the CLI error line.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "parameter",
            Error::InvalidInput(_) => "input",
            Error::Capacity(_) => "capacity",
            Error::UndefinedSimilarity => "similarity",
            Error::Config { .. } => "config",
            Error::MalformedTree(_) => "tree",
            Error::Lookup(_) => "lookup",
            Error::Training(_) => "training",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
