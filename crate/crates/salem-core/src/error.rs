use alloc::string::String;
use core::fmt;

/// Errors reported by the numerical operations in this crate.
#[derive(Debug, Clone, PartialEq)]
#[non_exhaustive]
pub enum Error {
    /// An argument violated a precondition (range, sign, count).
    InvalidArgument(String),
    /// Matrix or grid dimensions are inconsistent.
    ShapeMismatch(String),
    /// An input contained NaN or an infinity.
    NonFinite(String),
    /// A matrix expected to have full rank does not.
    RankDeficient(String),
    /// A combinatorial enumeration or sample budget exceeded its cap.
    BudgetExceeded { required: u64, cap: u64 },
    /// The operation is not available for this input class.
    Unsupported(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(s) => write!(f, "invalid argument: {s}"),
            Error::ShapeMismatch(s) => write!(f, "shape mismatch: {s}"),
            Error::NonFinite(s) => write!(f, "non-finite input: {s}"),
            Error::RankDeficient(s) => write!(f, "rank deficient: {s}"),
            Error::BudgetExceeded { required, cap } => {
                write!(f, "budget exceeded: {required} tests required, cap is {cap}")
            }
            Error::Unsupported(s) => write!(f, "unsupported: {s}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
