use thiserror::Error;

/// Errors raised by the verification core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("activation pattern is not bound to this network")]
    PatternMismatch,

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),

    #[error("parameter vector lies outside the parameter box")]
    ThetaOutOfBox,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded (parameter box rows missing?)")]
    Unbounded,

    #[error("LP solver failure: {0}")]
    Solver(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
