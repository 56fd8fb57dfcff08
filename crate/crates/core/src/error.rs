//! Crate-wide error type.
//!
//! Errors are grouped by failure class rather than by module so that the CLI
//! can map them onto exit codes (validation, sampling, I/O) without matching
//! on message strings.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed text input (Newick, schema, CSV cell); `offset` is a byte
    /// position where that is meaningful, otherwise 0.
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    /// A precondition or domain invariant was violated by otherwise
    /// well-formed input (bad dimensions, unknown labels, empty data, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Numerical failure: non-finite results where finite values are
    /// required, or a covariance that stays indefinite after the jitter
    /// policy is exhausted.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The sampler could not produce draws (initialization failure,
    /// all-divergent warmup, degenerate configuration).
    #[error("sampling error: {0}")]
    Sampling(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Shorthand used by parsers.
    pub fn parse(offset: usize, msg: impl Into<String>) -> Self {
        Error::Parse { offset, msg: msg.into() }
    }

    /// Shorthand for validation failures.
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Shorthand for numerical failures.
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Shorthand for sampler failures.
    pub fn sampling(msg: impl Into<String>) -> Self {
        Error::Sampling(msg.into())
    }
}
