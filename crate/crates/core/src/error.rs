use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FnnError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("t = {t} lies outside the domain [{min}, {max}]")]
    OutOfDomain { t: f64, min: f64, max: f64 },

    #[error("underdetermined least-squares system: {points} points for {params} coefficients")]
    Underdetermined { points: usize, params: usize },

    #[error("rank-deficient system: {0}")]
    RankDeficient(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("weight snapshots were not recorded during training")]
    NotRecorded,

    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, FnnError>;

pub(crate) fn invalid(msg: impl Into<String>) -> FnnError {
    FnnError::InvalidArgument(msg.into())
}
