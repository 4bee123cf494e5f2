use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("Hurst index {0} outside (1/3, 1/2]")]
    InvalidHurst(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("interval [{s}, {t}] is not covered by the grid")]
    IntervalOutsideGrid { s: f64, t: f64 },

    #[error("time {t} is not a node of the grid (t0 = {t0}, dt = {dt})")]
    NotOnGrid { t: f64, t0: f64, dt: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance factorisation failed: {0}")]
    Factorisation(String),

    #[error("non-finite state at step {step} (t = {t})")]
    BlowUp { step: usize, t: f64 },

    #[error("fixed-point iteration did not converge after {iterations} pullback doublings (last change {last_change:e}, tol {tol:e})")]
    NoConvergence {
        iterations: usize,
        last_change: f64,
        tol: f64,
    },

    #[error("state {0} outside the declared validity range")]
    RangeExcursion(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
