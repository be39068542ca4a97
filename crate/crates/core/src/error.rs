use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("infeasible step policy: {0}")]
    InfeasiblePolicy(String),

    #[error("z-coupling did not converge after {iterations} iterations (best residual {residual:e})")]
    CouplingNonConvergence { iterations: usize, residual: f64 },

    #[error("backtracking exhausted after {shrinks} shrinks (tau = {tau:e})")]
    BacktrackingExhausted { shrinks: usize, tau: f64 },

    #[error("root bracketing failed: {0}")]
    RootBracket(String),

    #[error("non-positive functional distance r_n = {value:e} at n = {n}")]
    NonPositiveDistance { n: usize, value: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
