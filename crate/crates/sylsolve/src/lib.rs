//! Coupled generalized Sylvester and ⋆-Sylvester matrix equations: solver,
//! nonsingularity certificates, and a Kronecker reference.

pub mod certify;
pub mod cli;
pub mod error;
pub mod kernel;
pub mod model;
pub mod oracle;
pub mod pschur;
pub mod reduction;
pub mod trisolve;

pub use error::{Error, Result};
pub use kernel::{Matrix, C64};
