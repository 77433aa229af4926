//! Closed-form distributional functionals of an mPH model.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::gamma;

use crate::error::{MphError, Result};
use crate::linalg::{kron_power_sum, matrix_exponential, KernelConfig};
use crate::model::{MphModel, SubIntensityMatrix};
use crate::quadrature::integrate_half_line;

/// Evaluation settings for the functionals and dependence measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub kernel: KernelConfig,
    /// Largest `p^d` accepted by [`MphModel::survival_kron`].
    pub kron_cap: usize,
    /// Largest Kronecker system solved per block pair in Kendall/Spearman.
    pub pair_cap: usize,
    /// Probability-scale tolerance of marginal quantile inversion.
    pub quantile_tol: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            kernel: KernelConfig::default(),
            kron_cap: 4096,
            pair_cap: 4096,
            quantile_tol: 1e-10,
        }
    }
}

/// How a moment was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentMethod {
    ClosedForm,
    /// Numerical integration, used for non-integer orders on defective blocks.
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentValue {
    pub value: f64,
    pub method: MomentMethod,
}

/// Univariate phase-type law `PH(π, T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseType {
    pub pi: DVector<f64>,
    pub t: SubIntensityMatrix,
}

impl PhaseType {
    pub fn survival(&self, x: f64) -> f64 {
        clamp01(self.pi.dot(&self.t.survival_vector(x)))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        clamp01(1.0 - self.survival(x))
    }

    pub fn density(&self, x: f64) -> f64 {
        self.pi.dot(&self.t.density_vector(x)).max(0.0)
    }

    /// `π (-T)^{-1} 1`.
    pub fn mean(&self) -> f64 {
        let ones = DVector::from_element(self.t.order(), 1.0);
        self.pi.dot(&self.t.resolvent_apply(0.0, &ones).expect("validated T is invertible"))
    }

    /// Smallest `x` with `F(x) >= u`, by bisection until the bracket's CDF
    /// values differ by at most `tol`.
    pub fn quantile(&self, u: f64, tol: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(MphError::Domain(format!("quantile level must lie in (0, 1), got {u}")));
        }
        let mut lo = 0.0;
        let mut hi = self.mean().max(f64::MIN_POSITIVE);
        let mut f_hi = self.cdf(hi);
        while f_hi < u {
            lo = hi;
            hi *= 2.0;
            f_hi = self.cdf(hi);
            if !hi.is_finite() {
                return Err(MphError::Numerical(format!("quantile {u} not bracketed")));
            }
        }
        let mut f_lo = self.cdf(lo);
        for _ in 0..2000 {
            if f_hi - f_lo <= tol {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = self.cdf(mid);
            if fm < u {
                lo = mid;
                f_lo = fm;
            } else {
                hi = mid;
                f_hi = fm;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

impl MphModel {
    fn check_point(&self, x: &[f64], strict: bool, what: &str) -> Result<()> {
        if x.len() != self.dim() {
            return Err(MphError::DimensionMismatch(format!(
                "{what} point has {} coordinates, model has d = {}",
                x.len(),
                self.dim()
            )));
        }
        for (i, &v) in x.iter().enumerate() {
            let ok = if strict { v > 0.0 } else { v >= 0.0 };
            if !ok || v.is_nan() {
                let need = if strict { "> 0" } else { ">= 0" };
                return Err(MphError::Domain(format!("{what} needs x[{i}] {need}, got {v}")));
            }
        }
        Ok(())
    }

    /// `Σ_j π_j Π_i v_i[j]`.
    fn mix(&self, vectors: &[DVector<f64>]) -> f64 {
        let mut total = 0.0;
        for (j, &w) in self.pi().iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            total += w * vectors.iter().map(|v| v[j]).product::<f64>();
        }
        total
    }

    /// Joint density `f(x)`.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x, true, "density")?;
        let v: Vec<_> = self
            .components()
            .iter()
            .zip(x)
            .map(|(t, &xi)| t.density_vector(xi))
            .collect();
        Ok(self.mix(&v).max(0.0))
    }

    /// Joint CDF `P(X <= x)`.
    pub fn cdf(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x, false, "cdf")?;
        let v: Vec<_> = self
            .components()
            .iter()
            .zip(x)
            .map(|(t, &xi)| t.survival_vector(xi).map(|s| 1.0 - s))
            .collect();
        Ok(clamp01(self.mix(&v)))
    }

    /// Joint survival `P(X > x)` in product form.
    pub fn survival(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x, false, "survival")?;
        let v: Vec<_> = self
            .components()
            .iter()
            .zip(x)
            .map(|(t, &xi)| t.survival_vector(xi))
            .collect();
        Ok(clamp01(self.mix(&v)))
    }

    /// Joint survival through one exponential of `T_1 x_1 ⊕ … ⊕ T_d x_d`.
    /// Rows `j(1 + p + … + p^{d-1})` of that exponential belong to the
    /// diagonal start states `e_j ⊗ … ⊗ e_j`.
    pub fn survival_kron(&self, x: &[f64], cfg: &EvalConfig) -> Result<f64> {
        self.check_point(x, false, "survival_kron")?;
        let p = self.order();
        let size = (p as u128).checked_pow(self.dim() as u32).unwrap_or(u128::MAX);
        if size > cfg.kron_cap as u128 {
            return Err(MphError::Unsupported(format!(
                "Kronecker representation has order {size}, above the cap {}",
                cfg.kron_cap
            )));
        }
        let scaled: Vec<DMatrix<f64>> = self
            .components()
            .iter()
            .zip(x)
            .map(|(t, &xi)| t.to_dense() * xi)
            .collect();
        let e = matrix_exponential(&kron_power_sum(&scaled))?;
        let stride: usize = (0..self.dim()).map(|k| p.pow(k as u32)).sum();
        let mut total = 0.0;
        for (j, &w) in self.pi().iter().enumerate() {
            if w != 0.0 {
                total += w * e.row(j * stride).sum();
            }
        }
        Ok(clamp01(total))
    }

    /// Laplace transform `E[exp(-u·X)]`.
    pub fn laplace(&self, u: &[f64]) -> Result<f64> {
        self.check_point(u, false, "laplace")?;
        let v = self
            .components()
            .iter()
            .zip(u)
            .map(|(t, &ui)| t.resolvent_apply(ui, &t.exit_vector()))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.mix(&v))
    }

    /// Cross moment `E[Π X_i^{θ_i}]` for `θ_i > -1`.
    pub fn moment(&self, theta: &[f64], cfg: &EvalConfig) -> Result<MomentValue> {
        if theta.len() != self.dim() {
            return Err(MphError::DimensionMismatch(format!(
                "moment order has {} entries, model has d = {}",
                theta.len(),
                self.dim()
            )));
        }
        if let Some(i) = theta.iter().position(|&t| !(t > -1.0) || !t.is_finite()) {
            return Err(MphError::Domain(format!("moment needs theta[{i}] > -1, got {}", theta[i])));
        }
        let mut method = MomentMethod::ClosedForm;
        let mut vectors = Vec::with_capacity(theta.len());
        for (t, &th) in self.components().iter().zip(theta) {
            let (v, m) = conditional_moments(t, th, &cfg.kernel)?;
            if m == MomentMethod::Quadrature {
                method = m;
            }
            vectors.push(v);
        }
        Ok(MomentValue {
            value: self.mix(&vectors),
            method,
        })
    }

    /// Margin `i` as a univariate phase-type law.
    pub fn marginal(&self, i: usize) -> Result<PhaseType> {
        if i >= self.dim() {
            return Err(MphError::InvalidArgument(format!("margin {i} out of range (d = {})", self.dim())));
        }
        Ok(PhaseType {
            pi: self.pi().clone(),
            t: self.component(i).clone(),
        })
    }
}

/// Per-start-state moments `Γ(θ+1) (-T)^{-θ} 1`, falling back to quadrature
/// of `∫ x^θ e^{Tx} t dx` when the eigenbasis is unusable.
pub(crate) fn conditional_moments(
    t: &SubIntensityMatrix,
    theta: f64,
    cfg: &KernelConfig,
) -> Result<(DVector<f64>, MomentMethod)> {
    let p = t.order();
    let ones = DVector::from_element(p, 1.0);
    if theta == 0.0 {
        return Ok((ones, MomentMethod::ClosedForm));
    }
    match t.neg_power_apply(theta, &ones, cfg) {
        Ok(v) => Ok((v * gamma(theta + 1.0), MomentMethod::ClosedForm)),
        Err(MphError::Unsupported(_)) => {
            // x = y^{1/(θ+1)} absorbs the x^θ factor: the integral becomes
            // (θ+1)^{-1} ∫ f(y^{1/(θ+1)}) dy.
            let exit = t.exit_vector();
            let power = 1.0 / (theta + 1.0);
            let (v, _) = integrate_half_line(
                |y| t.exp_apply(y.powf(power), &exit).iter().copied().collect(),
                1e-13,
                1e-11,
                4000,
            );
            Ok((DVector::from_vec(v) * power, MomentMethod::Quadrature))
        }
        Err(e) => Err(e),
    }
}
