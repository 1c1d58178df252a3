use thiserror::Error;

pub type Result<T> = std::result::Result<T, CurveError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Cholesky factorization of the dual system failed.
    #[error("linear system is not positive definite (smallest pivot {pivot:e} at row {row})")]
    IllConditioned { pivot: f64, row: usize },

    #[error("no yield-to-maturity root found in [{lo}, {hi}]")]
    NoYieldBracket { lo: f64, hi: f64 },

    #[error("discount factor {value} is not positive at maturity {maturity}")]
    NonPositiveDiscount { maturity: f64, value: f64 },

    #[error("scale is undefined without observations")]
    ScaleUndefined,

    #[error("experiment skipped: {0}")]
    ExperimentSkipped(String),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CurveError::InvalidInput(msg.into()))
}
