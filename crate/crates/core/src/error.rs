use thiserror::Error;

/// Errors raised anywhere in the solver suite.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error(
        "separation violated at step {step}: phi in [{min:.3e}, {max:.3e}] leaves [{floor:.1e}, 1 - {floor:.1e}]; try a smaller time step"
    )]
    SeparationViolation {
        step: usize,
        min: f64,
        max: f64,
        floor: f64,
    },

    #[error("mass drift {drift:.3e} at step {step} exceeds tolerance {tol:.3e}")]
    MassDrift { step: usize, drift: f64, tol: f64 },

    #[error("trajectory misalignment: {0}")]
    Misaligned(String),

    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    #[error("kernel unresolved: {0}")]
    Unresolved(String),

    #[error("hypothesis {clause} violated: {detail}")]
    Hypothesis { clause: &'static str, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("field file error: {0}")]
    FieldFile(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Hypothesis { .. }
            | Error::InvalidGrid(_)
            | Error::InvalidParameter(_)
            | Error::Infeasible(_)
            | Error::FieldFile(_) => 2,
            Error::Validation(_) => 4,
            _ => 3,
        }
    }

    /// Short machine-readable category name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::NonFinite(_) => "non_finite",
            Error::SeparationViolation { .. } => "separation_violation",
            Error::MassDrift { .. } => "mass_drift",
            Error::Misaligned(_) => "misaligned",
            Error::Infeasible(_) => "infeasible",
            Error::Unresolved(_) => "unresolved",
            Error::Hypothesis { .. } => "hypothesis",
            Error::Config(_) => "config",
            Error::FieldFile(_) => "field_file",
            Error::Validation(_) => "validation",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
