use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("quadrature did not converge within budget (last iterates {previous} and {last})")]
    QuadratureNotConverged { previous: f64, last: f64 },

    #[error("degenerate class: no training records carry label {0}")]
    DegenerateClass(u8),

    #[error("singular pooled covariance: {0}")]
    SingularCovariance(String),

    #[error("no root in bracket [{lo}, {hi}]")]
    NoRootInBracket { lo: f64, hi: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
