use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid window size: {0}")]
    InvalidSize(String),
    #[error("invalid state space: {0}")]
    InvalidSpace(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("state {0} is not representable in the space, even after truncation")]
    NotRepresentable(String),
    #[error("polynomial coefficient overflow")]
    CoefficientOverflow,
    #[error("memory budget of {budget} nonzeros exceeded while building row {row}")]
    MemoryBudget { row: usize, budget: u64 },
    #[error("power iteration did not converge at {params:?} after {iterations} iterations (residual {residual:e})")]
    NonConvergence { params: Vec<f64>, iterations: usize, residual: f64 },
    #[error("degenerate model: not subcritical at p = {0}")]
    Degenerate(f64),
    #[error("bound {bound} failed re-certification (radius {radius})")]
    CertificationFailed { bound: f64, radius: f64 },
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("invalid direction {0}")]
    InvalidDirection(usize),
    #[error("cache format error: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
