//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A scenario field violates one of its invariants.
    #[error("invalid scenario: field `{field}`: {reason}")]
    InvalidScenario { field: String, reason: String },

    /// Scenario file could not be parsed.
    #[error("scenario parse error in {path}: {reason}")]
    ScenarioParse { path: String, reason: String },

    /// Matrix or vector dimensions do not agree.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// An argument is outside its admissible range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Non-overlapping beam allocation cannot satisfy a user's quota.
    #[error(
        "beam allocation infeasible for user {user}: needs {needed} beams, \
         only {available} admissible (deficit {deficit})"
    )]
    InfeasibleAllocation {
        user: usize,
        needed: usize,
        available: usize,
        deficit: usize,
    },

    /// A factorization or determinant evaluation failed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("length mismatch: {context} ({a} vs {b})")]
    LengthMismatch {
        context: &'static str,
        a: usize,
        b: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
