use thiserror::Error;

use crate::certify::Certificate;
use crate::pschur::PeriodicSchurForm;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid system: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("periodic QZ did not converge after {iterations} iterations ({remaining} eigenvalues left)")]
    NoConvergence { iterations: usize, remaining: usize, partial: Box<PeriodicSchurForm> },

    #[error("pencil is singular (determinant vanishes identically)")]
    IrregularPencil,

    #[error("small system for entry ({i},{j}) is numerically singular (|r| = {pivot:.3e}, tol = {tol:.3e})")]
    SingularSmallSystem { i: usize, j: usize, pivot: f64, tol: f64 },

    #[error("system is singular: {0}")]
    Singular(Box<Certificate>),

    #[error("vectorized size {size} exceeds cap {cap}")]
    CapExceeded { size: usize, cap: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
