use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An iterative routine hit its cap. `best` carries the last iterate.
    #[error("numerical failure after {iterations} iterations: {reason}")]
    NumericalFailure {
        iterations: usize,
        reason: String,
        best: Vec<f64>,
    },

    #[error("unsupported query: {0}")]
    UnsupportedQuery(String),

    #[error("unsupported scale: {0}")]
    UnsupportedScale(String),

    #[error("internal consistency error at step {step}: {detail}")]
    Consistency { step: usize, detail: String },

    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}
