//! Dense matrix-function kernels: exponential, Van Loan block integrals,
//! Kronecker algebra, fractional inverse powers and Mittag-Leffler functions.
//!
//! All kernels operate on `nalgebra::DMatrix<f64>` and are pure functions of
//! their inputs.

mod expm;
mod kron;
pub mod mittag_leffler;
mod spectral;
mod vanloan;

use nalgebra::DMatrix;

use crate::error::{MphError, Result};

pub use expm::{matrix_exponential, matrix_exponential_unchecked};
pub use kron::{kron_power_sum, kron_product, kron_sum};
pub use spectral::{inverse_power, mittag_leffler_matrix, spectral_function, Eigensystem};
pub use vanloan::{vanloan_integral, VanLoanResult};

/// Numerical tolerances shared by the kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    /// Largest accepted condition number of an eigenvector basis.
    pub max_eigvec_condition: f64,
    /// Relative distance under which two eigenvalues are treated as one cluster.
    pub eigenvalue_cluster_tol: f64,
    /// Largest |z| for which the scalar Mittag-Leffler function uses its power series.
    pub ml_series_radius: f64,
    /// Target accuracy of the scalar Mittag-Leffler evaluation.
    pub ml_tolerance: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            max_eigvec_condition: 1e8,
            eigenvalue_cluster_tol: 1e-9,
            ml_series_radius: 1.0,
            ml_tolerance: 1e-15,
        }
    }
}

pub(crate) fn ensure_square_finite(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.nrows() == 0 || a.nrows() != a.ncols() {
        return Err(MphError::InvalidArgument(format!(
            "{what} must be a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(MphError::InvalidArgument(format!(
            "{what} has non-finite entries"
        )));
    }
    Ok(())
}

/// Induced 1-norm (maximum absolute column sum).
pub fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
