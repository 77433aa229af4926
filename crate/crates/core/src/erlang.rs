//! Grid discretization of a positive-orthant law into a finite mixture of
//! independent Erlang vectors, and its compilation into an mPH model.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MphError, Result};
use crate::model::{MphModel, SubIntensityMatrix};
use crate::sampler::SampleMatrix;

/// One grid cell `C(n, k) = Π_i ((k_i - 1)/n, k_i/n]` and its weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub k: Vec<usize>,
    pub w: f64,
}

/// Grid rate `n`, truncation `m` and normalized cell weights, in
/// lexicographic order of `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecJson")]
pub struct ErlangMixtureSpec {
    pub n: usize,
    pub m: Vec<usize>,
    pub cells: Vec<Cell>,
}

#[derive(Deserialize)]
struct SpecJson {
    n: usize,
    m: Vec<usize>,
    cells: Vec<Cell>,
}

impl TryFrom<SpecJson> for ErlangMixtureSpec {
    type Error = MphError;

    fn try_from(s: SpecJson) -> Result<Self> {
        ErlangMixtureSpec::new(s.n, s.m, s.cells)
    }
}

impl ErlangMixtureSpec {
    pub fn new(n: usize, m: Vec<usize>, mut cells: Vec<Cell>) -> Result<Self> {
        check_grid(n, &m)?;
        if cells.is_empty() {
            return Err(MphError::validation("cells", "at least one cell required"));
        }
        for (c, cell) in cells.iter().enumerate() {
            if cell.k.len() != m.len() {
                return Err(MphError::validation(format!("cells[{c}].k"), format!("expected {} entries", m.len())));
            }
            if cell.k.iter().zip(&m).any(|(&k, &mi)| k < 1 || k > mi) {
                return Err(MphError::validation(format!("cells[{c}].k"), "entries must lie in 1..=m"));
            }
            if !(cell.w > 0.0 && cell.w.is_finite()) {
                return Err(MphError::validation(format!("cells[{c}].w"), "weights must be positive"));
            }
        }
        let total: f64 = cells.iter().map(|c| c.w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(MphError::validation("cells", format!("weights sum to {total}, not 1")));
        }
        cells.sort_by(|a, b| a.k.cmp(&b.k));
        if cells.windows(2).any(|w| w[0].k == w[1].k) {
            return Err(MphError::validation("cells", "duplicate cell"));
        }
        Ok(Self { n, m, cells })
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// Largest shape over all cells and margins.
    pub fn max_shape(&self) -> usize {
        self.cells.iter().flat_map(|c| c.k.iter().copied()).max().unwrap_or(1)
    }

    /// Number of states of the compiled model.
    pub fn order(&self) -> usize {
        self.cells.len() * self.max_shape()
    }

    /// Truncation point `m / n`.
    pub fn corner(&self) -> Vec<f64> {
        self.m.iter().map(|&mi| mi as f64 / self.n as f64).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: SpecJson =
            serde_json::from_str(s).map_err(|e| MphError::InvalidArgument(format!("mixture spec JSON: {e}")))?;
        Self::try_from(raw)
    }
}

fn check_grid(n: usize, m: &[usize]) -> Result<()> {
    if n < 1 {
        return Err(MphError::InvalidArgument("grid rate n must be at least 1".into()));
    }
    if m.is_empty() || m.contains(&0) {
        return Err(MphError::InvalidArgument("truncation m needs d >= 1 entries, each >= 1".into()));
    }
    Ok(())
}

/// Empirical cell frequencies among rows with `x <= m/n`; other rows are dropped.
pub fn discretize_sample(data: &SampleMatrix, n: usize, m: &[usize]) -> Result<ErlangMixtureSpec> {
    check_grid(n, m)?;
    if data.ncols() != m.len() {
        return Err(MphError::DimensionMismatch(format!(
            "data has {} columns, truncation has {}",
            data.ncols(),
            m.len()
        )));
    }
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut kept = 0usize;
    'rows: for row in data.rows() {
        let mut k = Vec::with_capacity(row.len());
        for (&x, &mi) in row.iter().zip(m) {
            let ki = (x * n as f64).ceil().max(1.0);
            if ki > mi as f64 {
                continue 'rows;
            }
            k.push(ki as usize);
        }
        *counts.entry(k).or_default() += 1;
        kept += 1;
    }
    if kept == 0 {
        return Err(MphError::InvalidArgument("no observations inside the truncation box".into()));
    }
    let cells = counts
        .into_iter()
        .map(|(k, c)| Cell {
            k,
            w: c as f64 / kept as f64,
        })
        .collect::<Vec<_>>();
    renormalized(n, m.to_vec(), cells)
}

fn renormalized(n: usize, m: Vec<usize>, mut cells: Vec<Cell>) -> Result<ErlangMixtureSpec> {
    let total: f64 = cells.iter().map(|c| c.w).sum();
    cells.iter_mut().for_each(|c| c.w /= total);
    ErlangMixtureSpec::new(n, m, cells)
}

/// Cell masses of a CDF by inclusion-exclusion over the `2^d` cell corners,
/// normalized by the mass of the truncation box.
pub fn discretize_cdf<F: Fn(&[f64]) -> f64>(cdf: F, n: usize, m: &[usize]) -> Result<ErlangMixtureSpec> {
    check_grid(n, m)?;
    let d = m.len();
    // CDF on the corner lattice {0, …, m_i}/n, row-major.
    let sizes: Vec<usize> = m.iter().map(|&mi| mi + 1).collect();
    let total_pts: usize = sizes.iter().product();
    let mut lattice = vec![0.0; total_pts];
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    for slot in lattice.iter_mut() {
        for i in 0..d {
            x[i] = idx[i] as f64 / n as f64;
        }
        *slot = cdf(&x);
        advance(&mut idx, &sizes, 0);
    }
    let flat = |idx: &[usize]| idx.iter().zip(&sizes).fold(0, |acc, (&v, &s)| acc * s + v);

    let mut cells = Vec::new();
    let mut k = vec![1usize; d];
    let cell_count: usize = m.iter().product();
    let mut corner = vec![0usize; d];
    for _ in 0..cell_count {
        let mut mass = 0.0;
        for mask in 0..(1usize << d) {
            let mut sign = 1.0;
            for i in 0..d {
                if mask >> i & 1 == 1 {
                    corner[i] = k[i] - 1;
                    sign = -sign;
                } else {
                    corner[i] = k[i];
                }
            }
            mass += sign * lattice[flat(&corner)];
        }
        if mass < -1e-8 {
            return Err(MphError::Validation {
                path: format!("cell {k:?}"),
                message: format!("negative mass {mass}; CDF is not monotone"),
            });
        }
        if mass > 0.0 {
            cells.push(Cell { k: k.clone(), w: mass });
        }
        advance(&mut k, &m.iter().map(|&mi| mi + 1).collect::<Vec<_>>(), 1);
    }
    if cells.is_empty() {
        return Err(MphError::InvalidArgument("target puts no mass inside the truncation box".into()));
    }
    renormalized(n, m.to_vec(), cells)
}

/// Lexicographic increment of `idx` over `lo..sizes[i]`, last index fastest.
fn advance(idx: &mut [usize], sizes: &[usize], lo: usize) {
    for i in (0..idx.len()).rev() {
        idx[i] += 1;
        if idx[i] < sizes[i] {
            return;
        }
        idx[i] = lo;
    }
}

/// Compiles the mixture: block `c` owns states `cK .. (c+1)K`; margin `i`
/// runs an Erlang(`k_i`, `n`) chain from the block's first state. Phases past
/// `k_i` are unreachable and exit at rate `n`.
pub fn build_erlang_mixture(spec: &ErlangMixtureSpec) -> Result<MphModel> {
    let big_k = spec.max_shape();
    let p = spec.cells.len() * big_k;
    let rate = spec.n as f64;
    let mut pi = vec![0.0; p];
    for (c, cell) in spec.cells.iter().enumerate() {
        pi[c * big_k] = cell.w;
    }
    let mut comps = Vec::with_capacity(spec.dim());
    for i in 0..spec.dim() {
        let mut parts = Vec::new();
        for (c, cell) in spec.cells.iter().enumerate() {
            let base = c * big_k;
            let k = cell.k[i];
            let chain = DMatrix::from_fn(k, k, |r, s| {
                if r == s {
                    -rate
                } else if s == r + 1 {
                    rate
                } else {
                    0.0
                }
            });
            parts.push(((base..base + k).collect(), chain));
            for pad in k..big_k {
                parts.push((vec![base + pad], DMatrix::from_element(1, 1, -rate)));
            }
        }
        comps.push(SubIntensityMatrix::from_blocks(p, parts)?);
    }
    MphModel::new(nalgebra::DVector::from_vec(pi), comps)
}

/// Observed sup-norm error on a grid and the truncation bound `2(1 - F(m/n))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApproximationError {
    pub sup_error: f64,
    pub truncation_bound: f64,
}

pub fn approximation_error<F: Fn(&[f64]) -> f64>(
    target_cdf: F,
    model: &MphModel,
    spec: &ErlangMixtureSpec,
    grid: &[Vec<f64>],
) -> Result<ApproximationError> {
    let mut sup: f64 = 0.0;
    for x in grid {
        sup = sup.max((target_cdf(x) - model.cdf(x)?).abs());
    }
    Ok(ApproximationError {
        sup_error: sup,
        truncation_bound: 2.0 * (1.0 - target_cdf(&spec.corner())).abs(),
    })
}
