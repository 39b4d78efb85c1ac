use thiserror::Error;

/// Errors raised across the estimation and testing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (smallest eigenvalue {min:.3e}, largest {max:.3e})")]
    NotPositiveDefinite { min: f64, max: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("not enough samples: n = {n} must exceed p = {p}")]
    NotEnoughSamples { n: usize, p: usize },

    #[error("sample too small for the ellipticity test: n = {n}, p = {p} (need n > p >= 3)")]
    SampleTooSmall { n: usize, p: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("row {0} is the zero vector")]
    ZeroRow(usize),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("argument must be positive, got {0}")]
    NonPositiveArgument(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("series did not converge: {0}")]
    SeriesNonConvergence(String),

    #[error("arithmetic overflow: {0}")]
    Overflow(String),

    #[error("truncation too small: dropped mass {tail:.3e} exceeds 1% of mixture mean {mean:.3e}")]
    TruncationTooSmall { tail: f64, mean: f64 },

    #[error("invalid statistic weights ({w_ajne}, {w_gine}): both must be >= 0 and not both zero")]
    InvalidWeights { w_ajne: f64, w_gine: f64 },

    #[error("invalid radial law: {0}")]
    InvalidRadialLaw(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed user input rather than numerical trouble.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::NotSymmetric(_)
                | Error::DimensionMismatch { .. }
                | Error::InvalidDimensions(_)
                | Error::NotEnoughSamples { .. }
                | Error::SampleTooSmall { .. }
                | Error::ZeroRow(_)
                | Error::NonFinite { .. }
                | Error::Domain(_)
                | Error::InvalidWeights { .. }
                | Error::InvalidRadialLaw(_)
                | Error::InvalidConfig(_)
                | Error::Input(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
