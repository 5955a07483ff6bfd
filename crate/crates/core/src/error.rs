use thiserror::Error;

/// Errors produced by the reconstruction and uncertainty routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid harmonic set: {0}")]
    InvalidHarmonics(String),

    #[error("design matrix is numerically singular (cond(AᵀA) = {condition:.3e}) and no ridge ladder is configured")]
    SingularDesign { condition: f64 },

    #[error("regularization exhausted: ‖X‖₂ = {norm:.6e} still ≥ β = {beta:.6e} after every ladder entry")]
    RegularizationExhausted { norm: f64, beta: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("radial coordinate {0} outside [0, 1]")]
    OutOfDomain(f64),

    #[error("covariance is not positive semidefinite (min eigenvalue {min_eigenvalue:.6e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("chi-square law requires iid measurement noise (Σ_B = σ_b² I)")]
    RequiresIidNoise,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("quadrature failed to converge (relative change {0:.3e})")]
    QuadratureFailure(f64),

    #[error("negative variance {0:.6e}")]
    NegativeVariance(f64),

    #[error("degenerate pressure ratio: P02 equals P01")]
    DegenerateRatio,

    #[error("invalid correlation matrix: {0}")]
    InvalidCorrelation(String),

    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),

    #[error("negative budget component {label:?}: {value}")]
    NegativeComponent { label: String, value: f64 },

    #[error("{failed} of {total} Monte Carlo draws failed (limit 1%)")]
    DrawFailed { failed: usize, total: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
