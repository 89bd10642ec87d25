use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("invalid loss: {0}")]
    InvalidLoss(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid factorized point: {0}")]
    InvalidPoint(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("column {index} vanished during projection onto the unit-column set")]
    ZeroColumn { index: usize },

    #[error("leading singular pair did not converge after {sweeps} sweeps")]
    SpectralNonConvergence { sweeps: usize },

    #[error("entry {index} is {value}, expected +1 or -1")]
    NonSignEntry { index: usize, value: f64 },

    #[error("homogenization coordinate of the rank-one projection is zero")]
    HomogenizationCollapse,

    #[error("trace is missing {0}")]
    IncompleteTrace(String),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { name, value })
    }
}
