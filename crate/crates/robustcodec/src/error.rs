//! Crate-wide error type.

/// Convenience alias used by every fallible operation in the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type.
///
/// The CLI maps variants to exit codes: `Usage` and `Config` exit 2,
/// `Numerical` exits 3, everything else exits 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor or layer dimensions do not line up.
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A value left its numeric domain (NaN/Inf, divergence, domain error).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A configuration file or config value is unusable.
    #[error("config error: {0}")]
    Config(String),

    /// Command-line usage error.
    #[error("usage error: {0}")]
    Usage(String),

    /// A file exists but its contents do not match the expected format.
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },

    /// A machine check of a proved statement failed; this indicates a bug in
    /// the implementation, not in the statement.
    #[error("theory check failed: {0}")]
    TheoryViolation(String),

    /// A query landed outside the range spanned by computed data.
    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Helper for the most common invalid-argument construction.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
