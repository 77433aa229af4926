//! Inhomogeneous (time-changed) and fractional variants of the mPH class.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MphError, Result};
use crate::linalg::KernelConfig;
use crate::model::MphModel;
use crate::sampler::{sample, SampleMatrix};

/// Deterministic clock `g⁻¹(x) = ∫_0^x λ(u) du` of one margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TimeChange {
    Identity,
    /// `g⁻¹(x) = x^β`.
    Weibull { beta: f64 },
    /// `g⁻¹(x) = (e^{βx} - 1)/β`.
    Gompertz { beta: f64 },
}

impl TimeChange {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TimeChange::Identity => Ok(()),
            TimeChange::Weibull { beta } | TimeChange::Gompertz { beta } => {
                if beta > 0.0 && beta.is_finite() {
                    Ok(())
                } else {
                    Err(MphError::validation("time_changes.beta", format!("beta must be positive, got {beta}")))
                }
            }
        }
    }

    pub fn g_inverse(&self, x: f64) -> f64 {
        match *self {
            TimeChange::Identity => x,
            TimeChange::Weibull { beta } => x.powf(beta),
            TimeChange::Gompertz { beta } => (beta * x).exp_m1() / beta,
        }
    }

    /// Intensity `λ(x) = d/dx g⁻¹(x)`.
    pub fn rate(&self, x: f64) -> f64 {
        match *self {
            TimeChange::Identity => 1.0,
            TimeChange::Weibull { beta } => beta * x.powf(beta - 1.0),
            TimeChange::Gompertz { beta } => (beta * x).exp(),
        }
    }

    /// Inverse clock `g(y)`.
    pub fn g(&self, y: f64) -> f64 {
        match *self {
            TimeChange::Identity => y,
            TimeChange::Weibull { beta } => y.powf(1.0 / beta),
            TimeChange::Gompertz { beta } => (beta * y).ln_1p() / beta,
        }
    }
}

/// `X_i = g_i(Y_i)` with `Y ~ mPH(π, T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MiphJson")]
pub struct MiphModel {
    pub base: MphModel,
    pub time_changes: Vec<TimeChange>,
}

#[derive(Deserialize)]
struct MiphJson {
    base: MphModel,
    time_changes: Vec<TimeChange>,
}

impl TryFrom<MiphJson> for MiphModel {
    type Error = MphError;
    fn try_from(j: MiphJson) -> Result<Self> {
        MiphModel::new(j.base, j.time_changes)
    }
}

impl MiphModel {
    pub fn new(base: MphModel, time_changes: Vec<TimeChange>) -> Result<Self> {
        base.validate()?;
        if time_changes.len() != base.dim() {
            return Err(MphError::validation(
                "time_changes",
                format!("{} entries for d = {}", time_changes.len(), base.dim()),
            ));
        }
        for tc in &time_changes {
            tc.validate()?;
        }
        Ok(Self { base, time_changes })
    }

    fn clock(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.base.dim() {
            return Err(MphError::DimensionMismatch(format!(
                "point has {} coordinates, model has d = {}",
                x.len(),
                self.base.dim()
            )));
        }
        Ok(x.iter().zip(&self.time_changes).map(|(&v, tc)| tc.g_inverse(v)).collect())
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        let y = self.clock(x)?;
        let jac: f64 = x.iter().zip(&self.time_changes).map(|(&v, tc)| tc.rate(v)).product();
        Ok(self.base.density(&y)? * jac)
    }

    pub fn cdf(&self, x: &[f64]) -> Result<f64> {
        let y = self.clock(x)?;
        self.base.cdf(&y)
    }

    pub fn survival(&self, x: &[f64]) -> Result<f64> {
        let y = self.clock(x)?;
        self.base.survival(&y)
    }

    /// Samples the base model and maps margin `i` through `g_i`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleMatrix> {
        let y = sample(&self.base, n, seed)?;
        if self.time_changes.iter().all(|t| *t == TimeChange::Identity) {
            return Ok(y);
        }
        y.map(|c, v| self.time_changes[c].g(v))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: MiphJson = serde_json::from_str(s).map_err(|e| MphError::InvalidArgument(format!("mIPH JSON: {e}")))?;
        Self::try_from(raw)
    }
}

/// Fractional model: survival `Σ_j π_j Π_i e_jᵀ E_{α,1}(T_i x_i^α) 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FracJson")]
pub struct FracMphModel {
    pub base: MphModel,
    pub alpha: f64,
}

#[derive(Deserialize)]
struct FracJson {
    base: MphModel,
    alpha: f64,
}

impl TryFrom<FracJson> for FracMphModel {
    type Error = MphError;
    fn try_from(j: FracJson) -> Result<Self> {
        FracMphModel::new(j.base, j.alpha)
    }
}

impl FracMphModel {
    pub fn new(base: MphModel, alpha: f64) -> Result<Self> {
        base.validate()?;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(MphError::validation("alpha", format!("alpha must lie in (0, 1], got {alpha}")));
        }
        Ok(Self { base, alpha })
    }

    fn check(&self, x: &[f64], strict: bool) -> Result<()> {
        if x.len() != self.base.dim() {
            return Err(MphError::DimensionMismatch(format!(
                "point has {} coordinates, model has d = {}",
                x.len(),
                self.base.dim()
            )));
        }
        for (i, &v) in x.iter().enumerate() {
            let ok = if strict { v > 0.0 } else { v >= 0.0 };
            if !ok || v.is_nan() {
                return Err(MphError::Domain(format!("x[{i}] = {v} outside the domain")));
            }
        }
        Ok(())
    }

    fn mix(&self, vectors: &[DVector<f64>]) -> f64 {
        let pi = self.base.pi();
        (0..pi.len())
            .filter(|&j| pi[j] != 0.0)
            .map(|j| pi[j] * vectors.iter().map(|v| v[j]).product::<f64>())
            .sum()
    }

    fn survival_vectors(&self, x: &[f64], cfg: &KernelConfig) -> Result<Vec<DVector<f64>>> {
        let p = self.base.order();
        let ones = DVector::from_element(p, 1.0);
        self.base
            .components()
            .iter()
            .zip(x)
            .map(|(t, &xi)| t.mittag_leffler_apply(self.alpha, 1.0, xi.powf(self.alpha), &ones, cfg))
            .collect()
    }

    pub fn survival(&self, x: &[f64], cfg: &KernelConfig) -> Result<f64> {
        self.check(x, false)?;
        Ok(self.mix(&self.survival_vectors(x, cfg)?).clamp(0.0, 1.0))
    }

    pub fn cdf(&self, x: &[f64], cfg: &KernelConfig) -> Result<f64> {
        self.check(x, false)?;
        let v: Vec<_> = self.survival_vectors(x, cfg)?.into_iter().map(|s| s.map(|e| 1.0 - e)).collect();
        Ok(self.mix(&v).clamp(0.0, 1.0))
    }

    /// `Σ_j π_j Π_i x_i^{α-1} e_jᵀ E_{α,α}(T_i x_i^α) t_i`.
    pub fn density(&self, x: &[f64], cfg: &KernelConfig) -> Result<f64> {
        self.check(x, true)?;
        let a = self.alpha;
        let v = self
            .base
            .components()
            .iter()
            .zip(x)
            .map(|(t, &xi)| {
                let r = t.mittag_leffler_apply(a, a, xi.powf(a), &t.exit_vector(), cfg)?;
                Ok(r * xi.powf(a - 1.0))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.mix(&v).max(0.0))
    }

    /// `X_i = Y_i^{1/α} S_i` with `Y` a base sample and `S_i` i.i.d. positive
    /// `α`-stable with Laplace transform `e^{-u^α}`; this is the law whose
    /// survival is `Σ_j π_j Π_i e_jᵀ E_{α,1}(T_i x_i^α) 1`. The stable draws use
    /// their own per-row streams, so `α = 1` returns the base sample.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleMatrix> {
        let base = sample(&self.base, n, seed)?;
        if self.alpha == 1.0 {
            return Ok(base);
        }
        let d = base.ncols();
        let mut values = base.values().to_vec();
        let alpha = self.alpha;
        values.par_chunks_mut(d).enumerate().for_each(|(r, row)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ STABLE_KEY);
            rng.set_stream(r as u64);
            for v in row {
                *v = v.powf(1.0 / alpha) * positive_stable(alpha, &mut rng);
            }
        });
        SampleMatrix::new(n, d, values)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: FracJson =
            serde_json::from_str(s).map_err(|e| MphError::InvalidArgument(format!("fractional model JSON: {e}")))?;
        Self::try_from(raw)
    }
}

const STABLE_KEY: u64 = 0x5DEE_CE66_D1CE_5EED;

/// Positive stable variate with `E[e^{-uS}] = e^{-u^α}` (Kanter's method).
pub fn positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    if alpha == 1.0 {
        return 1.0;
    }
    let u = PI * loop {
        let v: f64 = rng.random();
        if v > 0.0 {
            break v;
        }
    };
    let e: f64 = rng.sample(Exp1);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * u).sin() / e).powf((1.0 - alpha) / alpha);
    a * b
}
