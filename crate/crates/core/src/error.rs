use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("sector restriction not allowed here: {0}")]
    SectorNotAllowed(String),

    #[error(
        "norm drift {drift:.3e} exceeds the budget {budget:.1e} (dt = {dt}); \
         integrate with a smaller time step"
    )]
    NormBudget { drift: f64, budget: f64, dt: f64 },

    #[error("dimension {dim} exceeds the dense limit {limit}; {hint}")]
    DimensionGuard {
        dim: usize,
        limit: usize,
        hint: &'static str,
    },

    #[error("energy window [{lo:.6}, {hi:.6}] contains no eigenstate (nearest eigenvalue {nearest:.6})")]
    EmptyWindow { lo: f64, hi: f64, nearest: f64 },

    #[error("Nyquist violation: spectral bound {bound:.4} is not below pi/dt = {limit:.4}")]
    Nyquist { bound: f64, limit: f64 },

    #[error("filtered state norm vanished (relative norm {relative:.3e}); energy {energy} lies outside the spectrum")]
    VanishingNorm { energy: f64, relative: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("fit window [{lo:.6}, {hi:.6}] contains non-positive or no bins")]
    NonPositiveFit { lo: f64, hi: f64 },

    #[error("too few samples: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("no admissible bins above the density floor")]
    NoAdmissibleBins,

    #[error("trajectory never decays to half of its initial centered amplitude")]
    NoDecay,

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
