use thiserror::Error;

/// Errors raised by validation and numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("not Hermitian (max |M - M^dagger| = {0:e})")]
    NotHermitian(f64),

    #[error("trace is not 1 (got {0})")]
    InvalidTrace(f64),

    #[error("not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("odd dimension {0}: observables must act on an even-dimensional space")]
    OddDimension(usize),

    #[error("observable is not a reflection (max |M^2 - I| = {0:e})")]
    NotReflection(f64),

    #[error("state is not Bell-diagonal (max off-diagonal magnitude {0:e})")]
    NotBellDiagonal(f64),

    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("transcript: {0}")]
    Transcript(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    range: &'static str,
) -> Result<()> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(Error::OutOfRange { name, value, range })
    }
}
