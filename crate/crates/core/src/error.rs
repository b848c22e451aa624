use thiserror::Error;

/// Errors raised by the kinematics, stabilizer and simulator layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GazeError {
    #[error("link index {index} out of range for chain with {len} links")]
    IndexError { index: usize, len: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("finite-difference oracle produced a non-finite value in column {column}")]
    OracleFailure { column: usize },

    /// Optical axes are (nearly) parallel; `xi3` is `(z_l . z_r)^2 - 1`.
    #[error("singular fixation configuration (xi3 = {xi3:e})")]
    SingularConfiguration { xi3: f64 },

    #[error("matrix is singular or ill-conditioned (condition number {condition:e})")]
    SingularMatrix { condition: f64 },

    #[error("simulation diverged at t = {t}: {reason}")]
    SimulationDiverged { t: f64, reason: String },

    #[error(
        "only {valid} cloud points projected inside the image region (need at least {required})"
    )]
    InsufficientCoverage { valid: usize, required: usize },

    #[error("logs cannot be compared: {0}")]
    InvalidComparison(String),
}

pub type Result<T> = std::result::Result<T, GazeError>;

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GazeError::InvalidInput(format!(
            "{what} contains non-finite values"
        )))
    }
}
