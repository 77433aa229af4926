//! Pearson, Kendall and Spearman correlations and the implied copula density.

use nalgebra::{DMatrix, DVector};

use crate::error::{MphError, Result};
use crate::functionals::{conditional_moments, EvalConfig};
use crate::linalg::kron_sum;
use crate::model::{MphModel, SubIntensityMatrix};

/// `G[i][j] = P(X > Y)` for independent `X ~ PH(e_i, T)`, `Y ~ PH(e_j, T)`,
/// over the start states in `support`. Equivalently the entries of the
/// solution of `T G + G Tᵀ = -1 tᵀ`, solved block pair by block pair.
fn exceedance_matrix(t: &SubIntensityMatrix, support: &[usize], cap: usize) -> Result<DMatrix<f64>> {
    let exit = t.exit_vector();
    let blocks = t.blocks();
    // Support states grouped by block.
    let mut by_block: Vec<Vec<(usize, usize)>> = vec![Vec::new(); blocks.len()];
    for (pos, &s) in support.iter().enumerate() {
        let (b, local) = t.locate(s);
        by_block[b].push((pos, local));
    }
    let n = support.len();
    let mut g = DMatrix::zeros(n, n);
    for (ba, rows) in by_block.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        for (bb, cols) in by_block.iter().enumerate() {
            if cols.is_empty() {
                continue;
            }
            let a = &blocks[ba];
            let b = &blocks[bb];
            let (na, nb) = (a.states.len(), b.states.len());
            if na * nb > cap {
                return Err(MphError::Unsupported(format!(
                    "block pair system of order {} exceeds the cap {cap}",
                    na * nb
                )));
            }
            // Row-major vec: (T_A ⊕ T_B) w = -(1_A ⊗ t_B).
            let t_b = DVector::from_iterator(nb, b.states.iter().map(|&s| exit[s]));
            let rhs = DVector::from_fn(na * nb, |r, _| -t_b[r % nb]);
            let w = kron_sum(&a.generator, &b.generator)
                .lu()
                .solve(&rhs)
                .ok_or_else(|| MphError::Numerical("singular Kronecker sum".into()))?;
            for &(pi, li) in rows {
                for &(pj, lj) in cols {
                    g[(pi, pj)] = w[li * nb + lj];
                }
            }
        }
    }
    Ok(g)
}

impl MphModel {
    fn check_pair(&self, k: usize, l: usize) -> Result<()> {
        let d = self.dim();
        if k >= d || l >= d {
            return Err(MphError::InvalidArgument(format!("margins ({k}, {l}) out of range (d = {d})")));
        }
        if k == l {
            return Err(MphError::Domain(format!("dependence needs two distinct margins, got k = l = {k}")));
        }
        Ok(())
    }

    fn support(&self) -> (Vec<usize>, DVector<f64>) {
        let idx: Vec<usize> = (0..self.order()).filter(|&j| self.pi()[j] > 0.0).collect();
        let w = DVector::from_iterator(idx.len(), idx.iter().map(|&j| self.pi()[j]));
        (idx, w)
    }

    /// Pearson correlation of margins `k` and `l`.
    pub fn pearson(&self, k: usize, l: usize, cfg: &EvalConfig) -> Result<f64> {
        self.check_pair(k, l)?;
        let (m1k, _) = conditional_moments(self.component(k), 1.0, &cfg.kernel)?;
        let (m1l, _) = conditional_moments(self.component(l), 1.0, &cfg.kernel)?;
        let (m2k, _) = conditional_moments(self.component(k), 2.0, &cfg.kernel)?;
        let (m2l, _) = conditional_moments(self.component(l), 2.0, &cfg.kernel)?;
        let pi = self.pi();
        let (ek, el) = (pi.dot(&m1k), pi.dot(&m1l));
        let cross = pi.dot(&m1k.component_mul(&m1l));
        let var_k = pi.dot(&m2k) - ek * ek;
        let var_l = pi.dot(&m2l) - el * el;
        Ok(((cross - ek * el) / (var_k * var_l).sqrt()).clamp(-1.0, 1.0))
    }

    /// Kendall's tau of margins `k` and `l`.
    pub fn kendall(&self, k: usize, l: usize, cfg: &EvalConfig) -> Result<f64> {
        self.check_pair(k, l)?;
        let (support, w) = self.support();
        let gk = exceedance_matrix(self.component(k), &support, cfg.pair_cap)?;
        let gl = exceedance_matrix(self.component(l), &support, cfg.pair_cap)?;
        let inner = gk.component_mul(&gl);
        let s = (w.transpose() * inner * &w)[(0, 0)];
        Ok((4.0 * s - 1.0).clamp(-1.0, 1.0))
    }

    /// Spearman's rho of margins `k` and `l`.
    pub fn spearman(&self, k: usize, l: usize, cfg: &EvalConfig) -> Result<f64> {
        self.check_pair(k, l)?;
        let (support, w) = self.support();
        let gk = exceedance_matrix(self.component(k), &support, cfg.pair_cap)?;
        let gl = exceedance_matrix(self.component(l), &support, cfg.pair_cap)?;
        // Entry j: P(X'_k <= X_k | start j) with X' an independent copy.
        let uk = (w.transpose() * gk).map(|v| 1.0 - v);
        let ul = (w.transpose() * gl).map(|v| 1.0 - v);
        let s: f64 = (0..w.len()).map(|j| w[j] * uk[j] * ul[j]).sum();
        Ok((12.0 * s - 3.0).clamp(-1.0, 1.0))
    }

    /// Copula density of margins `(k, l)` at each `(u, v)`: the bivariate
    /// density divided by the marginal densities, at the marginal quantiles.
    pub fn copula_density_grid(&self, k: usize, l: usize, grid: &[(f64, f64)], cfg: &EvalConfig) -> Result<Vec<f64>> {
        self.check_pair(k, l)?;
        if let Some(&(u, v)) = grid.iter().find(|(u, v)| !(*u > 0.0 && *u < 1.0 && *v > 0.0 && *v < 1.0)) {
            return Err(MphError::Domain(format!("copula grid point ({u}, {v}) not inside (0, 1)^2")));
        }
        let pair = self.select(&[k, l])?;
        let mk = self.marginal(k)?;
        let ml = self.marginal(l)?;
        grid.iter()
            .map(|&(u, v)| {
                let x = mk.quantile(u, cfg.quantile_tol)?;
                let y = ml.quantile(v, cfg.quantile_tol)?;
                let joint = pair.density(&[x, y])?;
                Ok(joint / (mk.density(x) * ml.density(y)))
            })
            .collect()
    }
}

/// Single-path reward representation `(π̃, T̃, R̃)` of an mPH law.
#[derive(Debug, Clone, PartialEq)]
pub struct MphStarRepresentation {
    pub pi_tilde: DVector<f64>,
    pub t_tilde: DMatrix<f64>,
    pub r_tilde: DMatrix<f64>,
}

impl MphStarRepresentation {
    pub fn order(&self) -> usize {
        self.pi_tilde.len()
    }
}

impl MphModel {
    /// Embeds the model in one chain of order `p²d`. Copy `k` starts in state
    /// `k` of `T_1`; on absorption of segment `i` it enters state `k` of
    /// segment `i + 1`. Time spent in segment `i` accrues to coordinate `i`.
    pub fn to_mphstar(&self) -> MphStarRepresentation {
        let p = self.order();
        let d = self.dim();
        let pd = p * d;
        let n = p * pd;
        let mut pi_tilde = DVector::zeros(n);
        let mut t_tilde = DMatrix::zeros(n, n);
        let mut r_tilde = DMatrix::zeros(n, d);
        let dense: Vec<DMatrix<f64>> = self.components().iter().map(|c| c.to_dense()).collect();
        let exits: Vec<DVector<f64>> = self.components().iter().map(|c| c.exit_vector()).collect();
        for k in 0..p {
            let base = k * pd;
            pi_tilde[base + k] = self.pi()[k];
            for i in 0..d {
                let off = base + i * p;
                t_tilde.view_mut((off, off), (p, p)).copy_from(&dense[i]);
                if i + 1 < d {
                    for r in 0..p {
                        t_tilde[(off + r, off + p + k)] = exits[i][r];
                    }
                }
                for r in 0..p {
                    r_tilde[(off + r, i)] = 1.0;
                }
            }
        }
        MphStarRepresentation {
            pi_tilde,
            t_tilde,
            r_tilde,
        }
    }
}
