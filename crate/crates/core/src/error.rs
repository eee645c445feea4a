use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("pointwise evaluation needs a concrete basis, got an abstract sequence")]
    UnsupportedBasis,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("quadrature did not converge at coordinate {index} (residual {residual:.3e})")]
    QuadratureNonConvergence { index: usize, residual: f64 },

    #[error("ball probability too small to estimate: {hits} hits from {samples} samples")]
    InfeasibleProbability { hits: u64, samples: u64 },

    #[error("too few draws: got {got}, need at least {need}")]
    TooFewDraws { got: usize, need: usize },

    #[error("empty candidate grid")]
    EmptyGrid,

    #[error("marginal likelihood table is all NaN")]
    AllNan,

    #[error("non-finite log-likelihood at iteration {iteration}")]
    NonFiniteLogLikelihood { iteration: u64 },

    #[error("malformed chain log: {0}")]
    ChainLog(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
