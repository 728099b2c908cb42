use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid interval: T = {t_end} < t0 = {t0}")]
    InvalidInterval { t0: f64, t_end: f64 },

    #[error("invalid resolution: {0}")]
    InvalidResolution(String),

    #[error("numeric fault at path {path}, step {step}: {what}")]
    NumericFault {
        path: usize,
        step: usize,
        what: String,
    },

    #[error("degenerate test function: reference integral is zero")]
    DegenerateTestFunction,

    #[error("invalid envelope: {0}")]
    InvalidEnvelope(String),

    #[error("invalid parameters for `{kind}`: {reason}")]
    InvalidParameters { kind: String, reason: String },

    #[error("incompatible generators: {0}")]
    IncompatibleGenerators(String),

    #[error("unsupported dimension: d + d*r = {0} exceeds the tensor quadrature cap of 6")]
    UnsupportedDimension(usize),

    #[error("invalid exponents: {0}")]
    InvalidExponents(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("fixed point did not converge at path {path}, step {step} (residual {residual:e})")]
    FixedPointDivergence {
        path: usize,
        step: usize,
        residual: f64,
    },

    #[error("ODE solution diverged at t = {t}: |Y| = {magnitude:e}")]
    Divergence { t: f64, magnitude: f64 },

    #[error("Newton iteration did not converge at t = {t}, x = {x} (residual {residual:e})")]
    NewtonFailure { t: f64, x: f64, residual: f64 },

    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
