//! Reference models used by the reproduction harness and the tests.

use nalgebra::DMatrix;

use crate::model::MphModel;

/// Bivariate `p = 4` model fitted to the Loss-ALAE data (in units of 10⁴).
pub fn loss_alae_fitted() -> MphModel {
    let t1 = DMatrix::from_row_slice(
        4,
        4,
        &[
            -0.381, 0.336, 0.0, 0.0, //
            0.0, -1.797, 0.0, 0.005, //
            0.007, 0.014, -0.077, 0.0, //
            0.024, 0.0, 0.0, -0.025,
        ],
    );
    let t2 = DMatrix::from_row_slice(
        4,
        4,
        &[
            -1.481, 0.9, 0.043, 0.0, //
            0.0, -2.526, 0.017, 0.004, //
            0.236, 0.025, -0.417, 0.0, //
            0.0, 0.0, 0.085, -0.085,
        ],
    );
    MphModel::from_dense(vec![0.408, 0.441, 0.135, 0.016], vec![t1, t2]).expect("preset is valid")
}

/// Sojourn intensities `(a, b, c)` of the permutation family.
pub const PERMUTED_RATES: [f64; 3] = [5.0, 20.0, 140.0];

fn unit_coupled(diag: [f64; 3]) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |r, c| if r == c { -diag[r] } else { 1.0 })
}

/// Bivariate `p = 3` model with uniform start, first margin on `(a, b, c)`
/// and second margin on the rates permuted by `perm`.
pub fn permuted_rates(perm: [usize; 3]) -> MphModel {
    let r = PERMUTED_RATES;
    let permuted = [r[perm[0]], r[perm[1]], r[perm[2]]];
    MphModel::from_dense(vec![1.0 / 3.0; 3], vec![unit_coupled(r), unit_coupled(permuted)])
        .expect("preset is valid")
}

/// The six permutations of `(0, 1, 2)` in lexicographic order.
pub const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
