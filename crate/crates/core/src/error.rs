use thiserror::Error;

use crate::fredholm::UniquenessReport;

pub type Result<T> = std::result::Result<T, VolcalError>;

#[derive(Debug, Error)]
pub enum VolcalError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no implied volatility: price {price} outside ({lower}, {upper})")]
    NoSolution { price: f64, lower: f64, upper: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: duplicate strike {strike} for expiry {expiry}")]
    DuplicateStrike { line: usize, expiry: f64, strike: f64 },

    #[error("expected quotes at two expiries, found {found:?}")]
    MissingExpiry { found: Vec<f64> },

    #[error("need at least {needed} quotes inside the data interval, got {got}")]
    TooFewQuotes { needed: usize, got: usize },

    #[error("grid mismatch: expected {expected} samples, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("contraction condition violated (rho = {:.6})", .0.rho_hat)]
    ContractionViolated(Box<UniquenessReport>),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("quadrature oracle did not converge: {0}")]
    OracleFailure(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl VolcalError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        VolcalError::Domain(msg.into())
    }
}
