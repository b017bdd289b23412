use std::path::PathBuf;

use thiserror::Error;

/// Invalid arguments handed to a numerical routine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("argument {name} = {value} is outside its domain ({expected})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("harmonic index (n = {n}, m = {m}) requires |m| <= n")]
    BadIndex { n: i64, m: i64 },
    #[error("{0}")]
    Invalid(String),
}

/// Failures of the moment-system solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("no convergence at degree {degree} after {iterations} iterations; final residual {residual:.3e}")]
    NonConvergence {
        degree: usize,
        iterations: usize,
        residual: f64,
    },
    #[error("solution has a non-positive or collapsed weight ({weight:.3e}) on orbit {orbit}")]
    NegativeWeight { orbit: usize, weight: f64 },
    #[error("Gauss-Newton system is numerically singular at degree {degree}")]
    RankDeficiency { degree: usize },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Failures of the transport solver and its inputs.
#[derive(Debug, Error)]
pub enum RteError {
    #[error("residual grew for {sweeps} consecutive sweeps (last {residual:.3e}); the system is not diagonally dominant")]
    Divergence { sweeps: usize, residual: f64 },
    #[error("{unknowns} unknowns exceed the desk-scale cap of {cap}; pass an explicit override to proceed")]
    TooLarge { unknowns: u64, cap: u64 },
    #[error("non-positive absorption {mu_a} for label {label}")]
    NonPositiveAbsorption { label: u8, mu_a: f64 },
    #[error("voxel label {0} has no entry in the material table")]
    UnknownLabel(u8),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Errors reading or writing the text/raw file formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl FormatError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        FormatError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
