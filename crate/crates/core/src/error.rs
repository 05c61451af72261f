use thiserror::Error;

use crate::belief::Rational;

/// Errors raised while building or validating model objects.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{path}: malformed rational {text:?}")]
    MalformedRational { path: String, text: String },

    #[error("{path}: expected {expected} coordinates, found {found}")]
    DimensionMismatch {
        path: String,
        expected: usize,
        found: usize,
    },

    #[error("{path}: coordinate {index} is negative ({value})")]
    NegativeCoordinate {
        path: String,
        index: usize,
        value: Rational,
    },

    #[error("{path}: coordinates sum to {sum}, not 1")]
    CoordinatesNotNormalized { path: String, sum: Rational },

    #[error("{path}: experiment has no atoms")]
    EmptyExperiment { path: String },

    #[error("{path}: atom weight {weight} is not in (0, 1]")]
    NonPositiveWeight { path: String, weight: Rational },

    #[error("{path}: weights sum to {sum}, not 1")]
    WeightsNotNormalized { path: String, sum: Rational },

    #[error("{path}: support beliefs {first} and {second} coincide")]
    DuplicateSupport { path: String, first: usize, second: usize },

    #[error("{path}: follow-up experiment has expectation {found}, expected {expected}")]
    NotBayesPlausible {
        path: String,
        expected: String,
        found: String,
    },

    #[error("{path}: {message}")]
    InvalidDocument { path: String, message: String },

    #[error("unknown builtin utility {0:?}")]
    UnknownBuiltin(String),

    #[error("unknown generator kind {0:?}")]
    UnknownGenerator(String),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("history inconsistent with strategy: {0}")]
    InconsistentHistory(String),

    #[error("policy closure violated: belief {belief} reached via {path} is outside D and Z")]
    PolicyClosure { belief: String, path: String },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("support size {size} exceeds branching bound {bound}")]
    BranchingBound { size: usize, bound: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("missing value for node {0}")]
    MissingValue(usize),

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
