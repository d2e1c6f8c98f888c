//! Error type shared across the crate.

use thiserror::Error;

/// Failure modes of the spectroscopy pipeline.
///
/// `Domain` covers arguments outside an operation's mathematical domain
/// (negative optical depth, zero temperature, ...). `Numerical` covers
/// computations that ran but produced an unusable result (singular steady
/// state, vanishing normalization, non-convergent quadrature).
#[derive(Debug, Clone, Error)]
pub enum LadderError {
    /// An input violates a documented precondition.
    #[error("domain error in {context}: {message}")]
    Domain {
        /// Operation or field the violation belongs to.
        context: &'static str,
        /// Human-readable description including the offending value.
        message: String,
    },

    /// The Lindblad generator has no unique steady state (singular or
    /// ill-conditioned linear system).
    #[error("no unique steady state: {0}")]
    NoUniqueSteadyState(String),

    /// A computation produced an unusable result.
    #[error("numerical failure in {context}: {message}")]
    Numerical {
        /// Operation the failure occurred in.
        context: &'static str,
        /// Human-readable description.
        message: String,
    },
}

impl LadderError {
    /// Shorthand constructor for domain violations.
    pub fn domain(context: &'static str, message: impl Into<String>) -> Self {
        Self::Domain { context, message: message.into() }
    }

    /// Shorthand constructor for numerical failures.
    pub fn numerical(context: &'static str, message: impl Into<String>) -> Self {
        Self::Numerical { context, message: message.into() }
    }
}
