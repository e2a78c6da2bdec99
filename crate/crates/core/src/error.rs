use thiserror::Error;

/// Errors raised by geometry, integration and diagnostic routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {point:?} lies outside the domain of chart `{chart}`")]
    OutOfDomain { chart: String, point: Vec<f64> },

    #[error("chart index {0} does not exist")]
    NoSuchChart(usize),

    #[error("metric at {point:?} is not symmetric (|g_ij - g_ji| = {asymmetry:e})")]
    NotSymmetric { point: Vec<f64>, asymmetry: f64 },

    #[error("metric at {point:?} is not positive definite")]
    NotPositiveDefinite { point: Vec<f64> },

    #[error("velocity is not unit length: g(v,v) = {norm_sq}")]
    NotUnit { norm_sq: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("field `{field}` is defined on `{found}`, not on `{expected}`")]
    FactorMismatch {
        field: String,
        expected: String,
        found: String,
    },

    #[error("manifold `{0}` has no radius surrogate")]
    NoRadius(String),

    #[error("manifold `{0}` has no radial layout for ball/annulus regions")]
    NoRadialLayout(String),

    #[error("flux field is not differentiable at {point:?}: |grad u| = {grad_norm:e}")]
    DegenerateFlux { point: Vec<f64>, grad_norm: f64 },

    #[error("trajectory truncated at t = {t}: {reason}")]
    Truncated { t: f64, reason: String },

    #[error("unknown {0}")]
    UnknownId(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
