use nalgebra::DMatrix;
use num_complex::Complex64;

use super::mittag_leffler::{mittag_leffler, recip_gamma};
use super::{ensure_square_finite, matrix_exponential, KernelConfig};
use crate::error::{MphError, Result};

/// Complex eigendecomposition `A = V diag(λ) V^{-1}` of a real matrix.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub values: Vec<Complex64>,
    pub vectors: DMatrix<Complex64>,
    pub inverse: DMatrix<Complex64>,
    pub condition: f64,
}

impl Eigensystem {
    /// Decomposes `a`, rejecting eigenvector bases whose condition number
    /// exceeds `cfg.max_eigvec_condition` (defective or nearly defective input).
    pub fn new(a: &DMatrix<f64>, cfg: &KernelConfig) -> Result<Self> {
        ensure_square_finite(a, "eigendecomposition input")?;
        let n = a.nrows();
        let ac = a.map(|v| Complex64::new(v, 0.0));
        let mut values: Vec<Complex64> = a.complex_eigenvalues().iter().copied().collect();
        values.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));

        let scale = values.iter().map(|v| v.norm()).fold(1.0, f64::max);
        let mut vectors = DMatrix::<Complex64>::zeros(n, n);
        let mut filled = 0;
        let mut i = 0;
        while i < n {
            // Gather a cluster of numerically equal eigenvalues.
            let mut j = i + 1;
            while j < n && (values[j] - values[i]).norm() <= cfg.eigenvalue_cluster_tol * scale {
                j += 1;
            }
            let size = j - i;
            let center = values[i..j].iter().sum::<Complex64>() / size as f64;
            for v in &mut values[i..j] {
                *v = center;
            }
            let shifted = &ac - DMatrix::<Complex64>::identity(n, n) * center;
            let svd = shifted.svd(false, true);
            let v_t = svd.v_t.ok_or_else(|| MphError::Numerical("SVD failed".into()))?;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
            for &k in order.iter().take(size) {
                if svd.singular_values[k] > 1e-8 * scale {
                    return Err(MphError::Unsupported(format!(
                        "eigenvalue {center} has a deficient eigenspace; matrix is defective"
                    )));
                }
                let col = v_t.row(k).transpose().map(|c| c.conj());
                vectors.set_column(filled, &col);
                filled += 1;
            }
            i = j;
        }

        let sv = vectors.clone().svd(false, false).singular_values;
        let (smax, smin) = sv
            .iter()
            .fold((0.0f64, f64::INFINITY), |(hi, lo), s| (hi.max(*s), lo.min(*s)));
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition <= cfg.max_eigvec_condition) {
            return Err(MphError::Unsupported(format!(
                "eigenvector basis condition {condition:.3e} exceeds {:.1e}; matrix is (nearly) defective",
                cfg.max_eigvec_condition
            )));
        }
        let inverse = vectors
            .clone()
            .try_inverse()
            .ok_or_else(|| MphError::Numerical("eigenvector basis is singular".into()))?;
        Ok(Self {
            values,
            vectors,
            inverse,
            condition,
        })
    }

    /// `V diag(f(λ)) V^{-1}`, real part.
    pub fn apply<F: Fn(Complex64) -> Complex64>(&self, f: F) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (k, lam) in self.values.iter().enumerate() {
            let fk = f(*lam);
            scaled.column_mut(k).iter_mut().for_each(|v| *v *= fk);
        }
        (scaled * &self.inverse).map(|c| c.re)
    }
}

/// Applies a scalar function to a diagonalizable real matrix through its
/// eigendecomposition.
pub fn spectral_function<F: Fn(Complex64) -> Complex64>(
    a: &DMatrix<f64>,
    f: F,
    cfg: &KernelConfig,
) -> Result<DMatrix<f64>> {
    Ok(Eigensystem::new(a, cfg)?.apply(f))
}

/// Returns `M^{-θ}` for a matrix whose eigenvalues have positive real part.
///
/// Integer `θ` uses LU inverses and products. Other values go through the
/// eigendecomposition with the principal branch of `λ^{-θ}`.
pub fn inverse_power(m: &DMatrix<f64>, theta: f64, cfg: &KernelConfig) -> Result<DMatrix<f64>> {
    ensure_square_finite(m, "inverse_power input")?;
    if !theta.is_finite() {
        return Err(MphError::InvalidArgument(format!("exponent must be finite, got {theta}")));
    }
    let n = m.nrows();
    if theta.fract() == 0.0 && theta.abs() < 1e6 {
        let k = theta as i64;
        if k == 0 {
            return Ok(DMatrix::identity(n, n));
        }
        let base = if k > 0 {
            m.clone()
                .try_inverse()
                .ok_or_else(|| MphError::Numerical("matrix is singular".into()))?
        } else {
            m.clone()
        };
        return Ok(int_power(&base, k.unsigned_abs()));
    }
    let eig = Eigensystem::new(m, cfg)?;
    if let Some(bad) = eig.values.iter().find(|v| v.re <= 0.0) {
        return Err(MphError::InvalidArgument(format!(
            "fractional power needs eigenvalues with positive real part, found {bad}"
        )));
    }
    Ok(eig.apply(|lam| lam.powf(-theta)))
}

fn int_power(base: &DMatrix<f64>, mut k: u64) -> DMatrix<f64> {
    let n = base.nrows();
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut sq = base.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &sq;
        }
        k >>= 1;
        if k > 0 {
            sq = &sq * &sq;
        }
    }
    result
}

/// Matrix Mittag-Leffler function `E_{α,β}(A)` for `α ∈ (0, 1]`.
///
/// `α = β = 1` is the matrix exponential; otherwise the scalar function is
/// applied to the spectrum.
pub fn mittag_leffler_matrix(
    a: &DMatrix<f64>,
    alpha: f64,
    beta: f64,
    cfg: &KernelConfig,
) -> Result<DMatrix<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(MphError::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if !beta.is_finite() {
        return Err(MphError::InvalidArgument(format!("beta must be finite, got {beta}")));
    }
    ensure_square_finite(a, "mittag_leffler_matrix input")?;
    if alpha == 1.0 && beta == 1.0 {
        return matrix_exponential(a);
    }
    let n = a.nrows();
    if a.iter().all(|v| *v == 0.0) {
        return Ok(DMatrix::identity(n, n) * recip_gamma(beta));
    }
    if n == 1 {
        let z = Complex64::new(a[(0, 0)], 0.0);
        let v = mittag_leffler(z, alpha, beta, cfg.ml_series_radius, cfg.ml_tolerance);
        return Ok(DMatrix::from_element(1, 1, v.re));
    }
    spectral_function(
        a,
        |z| mittag_leffler(z, alpha, beta, cfg.ml_series_radius, cfg.ml_tolerance),
        cfg,
    )
}
