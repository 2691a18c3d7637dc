//! Error type shared across the library.
//!
//! Likelihood evaluation at an infeasible parameter point is deliberately
//! *not* an error: objective functions return `f64::NEG_INFINITY` so that
//! optimizers can route around bad regions. Errors are reserved for broken
//! inputs, numerical failures that cannot be retried, and I/O problems.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, HeavyError>;

#[derive(Debug, thiserror::Error)]
pub enum HeavyError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    /// Malformed cell, missing column, unparseable date, and similar
    /// structural problems in an input file.
    #[error("schema error in {path} (row {row}, column {column}): {message}")]
    Schema {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    /// A month with too few daily observations to build realized measures.
    #[error("degenerate month {month}: {message}")]
    DegenerateMonth { month: String, message: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    /// NaN or infinity produced where a finite value is required.
    #[error("non-finite value at t={time} in {context}")]
    NonFinite { time: usize, context: String },

    /// A matrix that must be positive definite failed its Cholesky check.
    #[error("positive definiteness violated at t={time} in {context} (min eigenvalue {min_eigenvalue:.3e})")]
    PdViolation {
        time: usize,
        context: String,
        min_eigenvalue: f64,
    },

    /// Caller-supplied parameter outside its admissible region.
    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: String, message: String },

    /// Input data fails a quality gate (e.g. excessive clamping of realized
    /// correlations, constant series).
    #[error("data quality: {0}")]
    DataQuality(String),

    /// Optimizer could not produce a finite objective from any start.
    #[error("estimation failed in {stage}: {message}")]
    EstimationFailed { stage: String, message: String },

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl HeavyError {
    /// Short machine-readable code for the error class, used by the CLI
    /// when emitting structured error records.
    pub fn code(&self) -> &'static str {
        match self {
            HeavyError::Io { .. } => "io",
            HeavyError::Csv { .. } => "csv",
            HeavyError::Schema { .. } => "schema",
            HeavyError::DegenerateMonth { .. } => "degenerate_month",
            HeavyError::DimensionMismatch { .. } => "dimension_mismatch",
            HeavyError::NonFinite { .. } => "non_finite",
            HeavyError::PdViolation { .. } => "pd_violation",
            HeavyError::InvalidParameter { .. } => "invalid_parameter",
            HeavyError::DataQuality(_) => "data_quality",
            HeavyError::EstimationFailed { .. } => "estimation_failed",
            HeavyError::Simulation(_) => "simulation",
            HeavyError::Config(_) => "config",
        }
    }
}
