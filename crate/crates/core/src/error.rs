use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("ill-conditioned basis: {0}")]
    IllConditionedBasis(String),

    /// The design matrix has (numerically) deficient column rank. `direction`
    /// is a unit vector spanning the detected null space.
    #[error("rank-deficient design (null direction {direction:?})")]
    RankDeficient { direction: Vec<f64> },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("invalid data: {0}")]
    Data(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
