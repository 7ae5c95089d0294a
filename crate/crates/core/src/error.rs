use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field shape mismatch: expected {expected_nx}x{expected_ny}, got {nx}x{ny}")]
    ShapeMismatch {
        expected_nx: usize,
        expected_ny: usize,
        nx: usize,
        ny: usize,
    },

    #[error("Mach number U = {0} is too close to 1; delay horizon is unbounded")]
    DegenerateMach(f64),

    #[error("Mach number U = {mach} invalid for {model}: {reason}")]
    InvalidMach {
        mach: f64,
        model: &'static str,
        reason: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear solver did not converge: {0}")]
    SolverNonConvergence(String),

    #[error("fixed-point iteration diverged at t = {t} after {iterations} iterations (increment {increment:e}); reduce dt")]
    FixedPointDiverged {
        t: f64,
        iterations: usize,
        increment: f64,
    },

    #[error("time step {dt} violates the explicit stability bound {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("operator dimension {dim} exceeds the dense eigensolver guard {max}")]
    DimensionTooLarge { dim: usize, max: usize },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("history does not cover the delay window: need {needed} slices, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("closure {0} has no linearization (delay operator)")]
    NotLinearizable(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
