use thiserror::Error;

/// Errors produced by filter construction and stepping.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: max |A - A^H| = {deviation:.3e} (tolerance {tolerance:.3e})")]
    NotHermitian { deviation: f64, tolerance: f64 },

    #[error("matrix is not positive semidefinite: min eigenvalue = {min_eigenvalue:.3e}")]
    NotPsd { min_eigenvalue: f64 },

    #[error("trace {trace:.3e} is below the floor; outcome is numerically impossible")]
    VanishingTrace { trace: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid trace {trace:.6} (expected {expected})")]
    InvalidTrace { trace: f64, expected: f64 },

    #[error("outcome {outcome} out of range 1..={num_outcomes}")]
    OutcomeOutOfRange { outcome: usize, num_outcomes: usize },

    #[error("unknown initial state id {0}")]
    UnknownInitialState(u32),

    #[error("non-positive time step dt = {0}")]
    NonPositiveDt(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("malformed record: {0}")]
    MalformedRecord(String),

    #[error("parameter values are not a scalar grid; refinement needs ordered scalars")]
    NonScalarParameter,
}
