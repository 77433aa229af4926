use nalgebra::{DMatrix, DVector, RowDVector};

use super::expm::matrix_exponential_unchecked;
use crate::error::{MphError, Result};

/// Diagonal and upper-right blocks of `exp([[T, t·r], [0, T]] y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VanLoanResult {
    /// `e^{T y}`.
    pub exp_block: DMatrix<f64>,
    /// `∫_0^y e^{T(y-u)} t r e^{T u} du`.
    pub integral_block: DMatrix<f64>,
}

/// Evaluates the convolution integral `∫_0^y e^{T(y-u)} t r e^{T u} du`
/// through one exponential of the `2p x 2p` block matrix.
pub fn vanloan_integral(
    t_mat: &DMatrix<f64>,
    exit: &DVector<f64>,
    row: &RowDVector<f64>,
    y: f64,
) -> Result<VanLoanResult> {
    let p = t_mat.nrows();
    if t_mat.ncols() != p || exit.len() != p || row.len() != p {
        return Err(MphError::DimensionMismatch(format!(
            "Van Loan block needs T {p}x{p}, exit {p}, row {p}; got {}x{}, {}, {}",
            t_mat.nrows(),
            t_mat.ncols(),
            exit.len(),
            row.len()
        )));
    }
    if !(y >= 0.0) || !y.is_finite() {
        return Err(MphError::Domain(format!("Van Loan horizon must be >= 0, got {y}")));
    }
    Ok(vanloan_unchecked(t_mat, exit, row, y))
}

pub(crate) fn vanloan_unchecked(
    t_mat: &DMatrix<f64>,
    exit: &DVector<f64>,
    row: &RowDVector<f64>,
    y: f64,
) -> VanLoanResult {
    let p = t_mat.nrows();
    let mut block = DMatrix::<f64>::zeros(2 * p, 2 * p);
    let ty = t_mat * y;
    block.view_mut((0, 0), (p, p)).copy_from(&ty);
    block.view_mut((p, p), (p, p)).copy_from(&ty);
    block
        .view_mut((0, p), (p, p))
        .copy_from(&((exit * row) * y));
    let e = matrix_exponential_unchecked(&block);
    VanLoanResult {
        exp_block: e.view((0, 0), (p, p)).into_owned(),
        integral_block: e.view((0, p), (p, p)).into_owned(),
    }
}
