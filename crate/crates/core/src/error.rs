use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("direction vector has zero norm")]
    InvalidDirection,
    #[error("spectral measure has no atoms")]
    EmptyMeasure,
    #[error("invalid mass {0}: atom masses must be finite and positive")]
    InvalidMass(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionError { expected: usize, got: usize },
    #[error("degenerate spectral measure: min ratio {min_ratio:e} fails the non-degeneracy condition")]
    DegenerateMeasure { min_ratio: f64 },
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("sample count must be positive")]
    EmptyBatch,
    #[error("scheme {0} does not support this spectral measure")]
    UnsupportedScheme(&'static str),
    #[error("grid too coarse: frequency cutoff {p_max} is below the required {required_p_max}")]
    GridTooCoarse { p_max: f64, required_p_max: f64 },
    #[error("source does not vanish at the grid boundary: boundary max {boundary_max:e} vs sup {sup:e}")]
    BoundarySupportError { boundary_max: f64, sup: f64 },
    #[error("grid mismatch: {0}")]
    GridError(String),
    #[error("non-finite evaluation: {0}")]
    EvaluationError(String),
    #[error("remainder ratio {ratio:.4} >= {threshold}: Neumann series may diverge; reduce the drift oscillation or increase lambda")]
    ContractionFailure { ratio: f64, threshold: f64 },
    #[error("Neumann series did not reach tolerance within {max_iter} terms (last relative term {last:e})")]
    MaxIterExceeded { max_iter: usize, last: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
