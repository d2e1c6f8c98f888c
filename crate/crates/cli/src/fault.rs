//! CLI error type: every failure is classified as either a usage error
//! (bad flags, bad config, bad input files — exit code 2) or a computation
//! failure (numerics, I/O while writing results — exit code 3).

use ladderspec::LadderError;
use std::fmt;

/// A failure with an exit-code classification.
#[derive(Debug)]
pub enum CliError {
    /// Invalid command line, configuration, or input data. Exit code 2.
    Usage(String),
    /// The computation or result serialization failed. Exit code 3.
    Compute(String),
}

impl CliError {
    /// Shorthand constructor for usage errors.
    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    /// Shorthand constructor for computation failures.
    pub fn compute(msg: impl Into<String>) -> Self {
        Self::Compute(msg.into())
    }

    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Compute(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(msg) => write!(f, "invalid input: {msg}"),
            Self::Compute(msg) => write!(f, "computation failed: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<LadderError> for CliError {
    fn from(err: LadderError) -> Self {
        match err {
            // Domain violations are bad inputs; everything else is a failure
            // of the computation itself.
            LadderError::Domain { .. } => Self::Usage(err.to_string()),
            _ => Self::Compute(err.to_string()),
        }
    }
}

/// Result alias for CLI operations.
pub type CliResult<T> = std::result::Result<T, CliError>;
