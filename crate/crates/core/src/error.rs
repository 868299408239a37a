use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Variants are grouped by the category the CLI reports through its exit
/// code: configuration problems, numeric failures, and kinematic
/// singularities.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular matrix (pivot {pivot:e} below threshold {threshold:e})")]
    SingularMatrix { pivot: f64, threshold: f64 },
    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("kinematic singularity: pitch {theta} rad is within the guard band of +/-pi/2")]
    KinematicSingularity { theta: f64 },
    #[error("degenerate attitude: exact gimbal lock after recast")]
    Degenerate,
    #[error("magnetic field magnitude {0:e} T is too small to build a dipole command")]
    ZeroField(f64),
    #[error("discrete pair is not stabilizable (controllability rank {rank} < {dim})")]
    NotStabilizable { rank: usize, dim: usize },
    #[error("Riccati extraction failed: X1 block is singular (spectrum on the unit circle?)")]
    SingularX1,
    #[error("box-constrained QP did not converge within {0} iterations")]
    QpNoConvergence(usize),
    #[error("eigenvalue {re:e}{im:+e}i off the imaginary axis at delta = {delta_deg} deg")]
    MixedSpectrum { delta_deg: f64, re: f64, im: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config validation error: {0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Coarse category used for process exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Parse(_) | Error::Validation(_) | Error::Io(_) | Error::InvalidArgument(_) => {
                ErrorCategory::Config
            }
            Error::KinematicSingularity { .. } | Error::Degenerate => ErrorCategory::Singularity,
            _ => ErrorCategory::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Numeric,
    Singularity,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Numeric => 3,
            ErrorCategory::Singularity => 4,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
