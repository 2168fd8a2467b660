use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum FbsdeError {
    /// A derivative callback was required but is unavailable.
    #[error("missing derivative: {0}")]
    MissingDerivative(&'static str),

    /// Diffusion channel index outside 1..=d.
    #[error("diffusion channel {channel} out of range 1..={dim}")]
    ChannelOutOfRange { channel: usize, dim: usize },

    /// Multi-indices of length greater than two are not supported.
    #[error("multi-index of length {0} unsupported (maximum length 2)")]
    UnsupportedMultiIndex(usize),

    /// Gauss-Hermite order outside the supported range.
    #[error("Gauss-Hermite order {0} out of range 1..=64")]
    QuadOrderOutOfRange(usize),

    /// Tensor-product quadrature would exceed the point budget.
    #[error("tensor quadrature budget exceeded: {points} points (cap {cap})")]
    QuadBudgetExceeded { points: usize, cap: usize },

    /// Tensor quadrature is only provided for low dimensions.
    #[error("dimension {0} unsupported for tensor quadrature (maximum 3)")]
    DimensionTooLarge(usize),

    /// Vector length does not match the problem dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A query point left the interpolable domain (grid plus one-spacing slack).
    #[error("point escaped grid domain in dimension {dim}: x = {x:?}")]
    DomainEscape { x: Vec<f64>, dim: usize },

    /// Picard iteration failed to reach the tolerance.
    #[error("Picard iteration did not converge after {iters} iterations (last step {residual:.3e})")]
    PicardDiverged { iters: usize, residual: f64 },

    /// Invalid solver or experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A per-level solver failure tagged with the offending time level.
    #[error("solver failed at time level {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<FbsdeError>,
    },

    /// Convergence study where every row sat at the rounding floor.
    #[error("rate undefined: {0}")]
    RateUndefined(String),

    /// I/O failure while writing a report.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl FbsdeError {
    /// Wraps an error with the time level at which it occurred.
    pub fn at_level(self, level: usize) -> Self {
        FbsdeError::AtLevel {
            level,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, FbsdeError>;
