//! Shared numerical kernels: seeded random streams, the error function,
//! Gauss-Hermite quadrature, dense and symmetric matrices with a Jacobi
//! eigensolver, LU linear solves, and a central finite-difference gradient
//! oracle used by every gradient test.

mod eigen;
mod fd;
mod linalg;
mod quad;
mod rng;
mod special;

pub use eigen::symmetric_eigen;
pub use fd::finite_diff_gradient;
pub use linalg::{solve_linear, Matrix, SymmetricMatrix};
pub use quad::{gaussian_expectation, HermiteRule};
pub use rng::RandomStream;
pub use special::{erf, erfc};

use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum NumericsError {
    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),

    #[error("quadrature order must be at least 2, got {0}")]
    OrderTooSmall(usize),

    #[error("matrix is singular or numerically rank-deficient")]
    SingularMatrix,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}
