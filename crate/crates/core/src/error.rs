use thiserror::Error;

/// Errors raised by the numerical engines and simulators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("polynomial degree {degree} exceeds the supported maximum {max}")]
    DegreeOverflow { degree: usize, max: usize },

    #[error("covariance matrix is not symmetric positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    IndefiniteCovariance { min_eigenvalue: f64 },

    #[error("covariance matrix is not symmetric: {0} != {1}")]
    AsymmetricCovariance(f64, f64),

    #[error("state ({x1}, {x2}) lies outside the closed unit disk")]
    OutsideDisk { x1: f64, x2: f64 },

    #[error("state ({x1}, {x2}) lies on the unit circle where the gradient is undefined")]
    OnBoundary { x1: f64, x2: f64 },

    #[error("vector is not unit norm (norm {norm})")]
    NotUnitNorm { norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered at step {step}: {what}")]
    NonFinite { step: usize, what: String },

    #[error("Bihari-LaSalle bound blows up: 1 - b a^(k-2) t = {denominator} <= 0")]
    BlowUp { denominator: f64 },

    #[error("empty certification region: {0}")]
    EmptyRegion(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("cannot parse `{input}`: {reason}")]
    Parse { input: String, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
