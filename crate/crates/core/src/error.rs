use thiserror::Error;

/// Errors raised across the engine.
///
/// `Domain`, `Parameter` and `Invalid` are input errors; the remaining
/// variants are numerical failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("invariant violation: {0}")]
    Invalid(String),

    #[error("kernel singularity: coincident points at t={t}, theta={theta}")]
    Singular { t: f64, theta: f64 },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("matrix is not positive definite at pivot {0}")]
    NotPositiveDefinite(usize),
}

impl Error {
    /// True for errors caused by bad input rather than numerical breakdown.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::Parameter(_) | Error::Invalid(_) | Error::Mesh(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
