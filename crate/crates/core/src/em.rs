//! Maximum-likelihood estimation by expectation-maximization.
//!
//! The E-step evaluates, per observation and margin, the conditional
//! occupation times, jump counts and exit counts through one Van Loan block
//! exponential. Per-margin scale factors keep the joint density from
//! underflowing: each `e^{T_i x_i} t_i` is divided by its largest entry and the
//! logarithms of those factors are carried separately.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{MphError, Result};
use crate::linalg::{matrix_exponential_unchecked, vanloan_integral};
use crate::model::{MphModel, SubIntensityMatrix};
use crate::sampler::SampleMatrix;

/// Expected complete-data sufficient statistics given the observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedStats {
    /// Expected number of chains started in each state (all margins).
    pub b: DVector<f64>,
    /// Per margin, expected occupation time of each state.
    pub z: Vec<DVector<f64>>,
    /// Per margin, expected number of `k -> s` jumps.
    pub n_trans: Vec<DMatrix<f64>>,
    /// Per margin, expected number of exits from each state.
    pub n_exit: Vec<DVector<f64>>,
}

impl ExpectedStats {
    fn zeros(p: usize, d: usize) -> Self {
        Self {
            b: DVector::zeros(p),
            z: vec![DVector::zeros(p); d],
            n_trans: vec![DMatrix::zeros(p, p); d],
            n_exit: vec![DVector::zeros(p); d],
        }
    }

    fn add(&mut self, o: &Self) {
        self.b += &o.b;
        for i in 0..self.z.len() {
            self.z[i] += &o.z[i];
            self.n_trans[i] += &o.n_trans[i];
            self.n_exit[i] += &o.n_exit[i];
        }
    }

    pub fn order(&self) -> usize {
        self.b.len()
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }
}

/// Allowed off-diagonal transitions, one `p x p` pattern per margin.
pub type StructureMask = Vec<DMatrix<bool>>;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub p: usize,
    pub max_iters: usize,
    /// Stop once the log-likelihood increases by less than this.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub structure_mask: Option<StructureMask>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            p: 2,
            max_iters: 2000,
            tol: 1e-7,
            restarts: 1,
            seed: 0,
            structure_mask: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.p < 1 {
            return Err(MphError::InvalidArgument("p must be at least 1".into()));
        }
        if self.max_iters < 1 {
            return Err(MphError::InvalidArgument("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(MphError::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.restarts < 1 {
            return Err(MphError::InvalidArgument("restarts must be at least 1".into()));
        }
        if let Some(mask) = &self.structure_mask {
            if mask.len() != d || mask.iter().any(|m| m.nrows() != self.p || m.ncols() != self.p) {
                return Err(MphError::DimensionMismatch(format!(
                    "structure mask must hold {d} matrices of size {0}x{0}",
                    self.p
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: MphModel,
    /// Log-likelihood of each successive iterate, starting from the initial model.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
    /// Final log-likelihood of every restart, by index (`None` if it failed).
    pub restart_logliks: Vec<Option<f64>>,
}

impl FitResult {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace holds at least the initial model")
    }
}

/// Number of free parameters: `(p - 1) + d p²`.
pub fn degrees_of_freedom(p: usize, d: usize) -> usize {
    (p - 1) + d * p * p
}

/// Fit summary written next to the fitted model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
    pub aic: f64,
    pub bic: f64,
    pub df: usize,
    pub n: usize,
    pub restart_index: usize,
}

impl FitReport {
    pub fn new(result: &FitResult, n: usize) -> Self {
        let ll = result.loglik();
        let df = degrees_of_freedom(result.model.order(), result.model.dim());
        Self {
            loglik: ll,
            iterations: result.iterations,
            converged: result.converged,
            trace: result.loglik_trace.clone(),
            aic: 2.0 * df as f64 - 2.0 * ll,
            bic: df as f64 * (n as f64).ln() - 2.0 * ll,
            df,
            n,
            restart_index: result.restart_index,
        }
    }
}

const CHUNK: usize = 64;

fn check_data(model: &MphModel, data: &SampleMatrix) -> Result<()> {
    if data.ncols() != model.dim() {
        return Err(MphError::DimensionMismatch(format!(
            "data has {} columns, model has d = {}",
            data.ncols(),
            model.dim()
        )));
    }
    if data.nrows() == 0 {
        return Err(MphError::InvalidArgument("empty data".into()));
    }
    Ok(())
}

/// Scaled per-margin density vectors of one row: `â_i = e^{T_i x_i} t_i / s_i`.
/// Returns `(â, ln s, ln f)`; `ln f` is `-∞` when the density vanishes.
fn scaled_densities(comps: &[(DMatrix<f64>, DVector<f64>)], pi: &DVector<f64>, x: &[f64]) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>, Vec<f64>, f64) {
    let mut exps = Vec::with_capacity(x.len());
    let mut scaled = Vec::with_capacity(x.len());
    let mut log_scales = Vec::with_capacity(x.len());
    for ((t, exit), &xi) in comps.iter().zip(x) {
        let e = matrix_exponential_unchecked(&(t * xi));
        let a = &e * exit;
        let s = a.max();
        if !(s > 0.0) {
            exps.push(e);
            scaled.push(a);
            log_scales.push(f64::NEG_INFINITY);
            continue;
        }
        scaled.push(a / s);
        exps.push(e);
        log_scales.push(s.ln());
    }
    let p = pi.len();
    let a_hat: f64 = (0..p)
        .map(|k| pi[k] * scaled.iter().map(|v| v[k]).product::<f64>())
        .sum();
    let lf = if a_hat > 0.0 {
        a_hat.ln() + log_scales.iter().sum::<f64>()
    } else {
        f64::NEG_INFINITY
    };
    (exps, scaled, log_scales, lf)
}

fn dense_components(model: &MphModel) -> Vec<(DMatrix<f64>, DVector<f64>)> {
    model
        .components()
        .iter()
        .map(|c| (c.to_dense(), c.exit_vector()))
        .collect()
}

/// Observed-data log-likelihood `Σ_m ln f(x_m)`; `-∞` if any density is 0.
pub fn log_likelihood(model: &MphModel, data: &SampleMatrix) -> Result<f64> {
    check_data(model, data)?;
    let comps = dense_components(model);
    let rows: Vec<&[f64]> = data.rows().collect();
    let parts: Vec<f64> = rows
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|x| scaled_densities(&comps, model.pi(), x).3)
                .sum::<f64>()
        })
        .collect();
    Ok(parts.iter().sum())
}

/// Conditional expectations of the sufficient statistics and the
/// log-likelihood of `model`.
pub fn e_step_with_loglik(model: &MphModel, data: &SampleMatrix) -> Result<(ExpectedStats, f64)> {
    check_data(model, data)?;
    let comps = dense_components(model);
    let pi = model.pi();
    let (p, d) = (model.order(), model.dim());
    let rows: Vec<&[f64]> = data.rows().collect();
    let parts: Vec<Result<(ExpectedStats, f64)>> = rows
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut acc = ExpectedStats::zeros(p, d);
            let mut ll = 0.0;
            for (r, x) in chunk.iter().enumerate() {
                let row = c * CHUNK + r;
                ll += accumulate_row(&comps, pi, x, &mut acc).map_err(|_| MphError::DensityUnderflow { row })?;
            }
            Ok((acc, ll))
        })
        .collect();
    let mut stats = ExpectedStats::zeros(p, d);
    let mut ll = 0.0;
    for part in parts {
        let (s, l) = part?;
        stats.add(&s);
        ll += l;
    }
    Ok((stats, ll))
}

/// The E-step alone.
pub fn e_step(model: &MphModel, data: &SampleMatrix) -> Result<ExpectedStats> {
    e_step_with_loglik(model, data).map(|(s, _)| s)
}

fn accumulate_row(comps: &[(DMatrix<f64>, DVector<f64>)], pi: &DVector<f64>, x: &[f64], acc: &mut ExpectedStats) -> std::result::Result<f64, ()> {
    let (exps, scaled, log_scales, lf) = scaled_densities(comps, pi, x);
    if !lf.is_finite() {
        return Err(());
    }
    let p = pi.len();
    let d = x.len();
    let a_hat: f64 = (0..p)
        .map(|k| pi[k] * scaled.iter().map(|v| v[k]).product::<f64>())
        .sum();
    for k in 0..p {
        let prod: f64 = scaled.iter().map(|v| v[k]).product();
        acc.b[k] += d as f64 * pi[k] * prod / a_hat;
    }
    for i in 0..d {
        let (t, exit) = &comps[i];
        let inv_s = (-log_scales[i]).exp();
        // Effective start weights for margin i: π_j Π_{l≠i} â_l[j] / â.
        let w = RowDVector::from_fn(p, |_, j| {
            let others: f64 = (0..d).filter(|&l| l != i).map(|l| scaled[l][j]).product();
            pi[j] * others / a_hat
        });
        let vl = vanloan_integral(t, exit, &w, x[i]).expect("dimensions checked");
        let u = &vl.integral_block;
        let w_exp = &w * &exps[i];
        for k in 0..p {
            acc.z[i][k] += u[(k, k)] * inv_s;
            acc.n_exit[i][k] += exit[k] * w_exp[k] * inv_s;
            for s in 0..p {
                if s != k && t[(k, s)] != 0.0 {
                    acc.n_trans[i][(k, s)] += t[(k, s)] * u[(s, k)] * inv_s;
                }
            }
        }
    }
    Ok(lf)
}

/// Occupation times below this are treated as zero in the M-step.
pub const STARVATION_THRESHOLD: f64 = 1e-12;

/// Closed-form maximizer of the expected complete-data likelihood.
///
/// A state whose expected occupation time in margin `i` falls below
/// [`STARVATION_THRESHOLD`] keeps its row of `T_i` from `previous`.
pub fn m_step(stats: &ExpectedStats, n: usize, previous: &MphModel, mask: Option<&StructureMask>) -> Result<MphModel> {
    let (p, d) = (stats.order(), stats.dim());
    if previous.order() != p || previous.dim() != d {
        return Err(MphError::DimensionMismatch("statistics and previous model differ in shape".into()));
    }
    let mut pi = &stats.b / (d * n) as f64;
    let total = pi.sum();
    pi /= total;
    let mut mats = Vec::with_capacity(d);
    for i in 0..d {
        let prev = previous.component(i).to_dense();
        let mut t = DMatrix::zeros(p, p);
        for k in 0..p {
            let z = stats.z[i][k];
            let mut out_rate = 0.0;
            let mut row = vec![0.0; p];
            if z >= STARVATION_THRESHOLD {
                for s in 0..p {
                    let allowed = mask.is_none_or(|m| m[i][(k, s)]);
                    if s != k && allowed {
                        row[s] = stats.n_trans[i][(k, s)] / z;
                        out_rate += row[s];
                    }
                }
                out_rate += stats.n_exit[i][k] / z;
            }
            if out_rate > 0.0 && out_rate.is_finite() {
                for s in 0..p {
                    t[(k, s)] = row[s];
                }
                t[(k, k)] = -out_rate;
            } else {
                t.row_mut(k).copy_from(&prev.row(k));
            }
        }
        mats.push(t);
    }
    MphModel::from_dense(pi.iter().copied().collect(), mats)
        .map_err(|e| MphError::Numerical(format!("M-step produced an invalid model: {e}")))
}

/// Random starting model. `π ~ Dirichlet(1)`, allowed off-diagonal rates and
/// exit rates `~ U(0, 1)`; each `T_i` is then scaled so the margin mean equals
/// the sample mean of column `i`.
pub fn initialize(p: usize, d: usize, seed: u64, data: &SampleMatrix, mask: Option<&StructureMask>) -> Result<MphModel> {
    if p < 1 || d < 1 {
        return Err(MphError::InvalidArgument("p and d must be at least 1".into()));
    }
    if data.ncols() != d {
        return Err(MphError::DimensionMismatch(format!("data has {} columns, expected {d}", data.ncols())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pi: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    let means = data.column_means();
    let mut mats = Vec::with_capacity(d);
    for i in 0..d {
        let mut t = DMatrix::zeros(p, p);
        for k in 0..p {
            let mut sum = 0.0;
            for s in 0..p {
                if s != k {
                    let u: f64 = rng.random();
                    if mask.is_none_or(|m| m[i][(k, s)]) {
                        t[(k, s)] = u;
                        sum += u;
                    }
                }
            }
            // Keep the exit rate away from 0 so T is invertible.
            let exit: f64 = rng.random::<f64>().max(1e-3);
            t[(k, k)] = -(sum + exit);
        }
        let sub = SubIntensityMatrix::new(t.clone())?;
        let ones = DVector::from_element(p, 1.0);
        let model_mean = DVector::from_vec(pi.clone()).dot(&sub.resolvent_apply(0.0, &ones)?);
        mats.push(t * (model_mean / means[i]));
    }
    MphModel::from_dense(pi, mats)
}

fn run_restart(data: &SampleMatrix, cfg: &FitConfig, index: usize) -> Result<FitResult> {
    let seed = cfg.seed.wrapping_add(index as u64);
    let mask = cfg.structure_mask.as_ref();
    let mut model = initialize(cfg.p, data.ncols(), seed, data, mask)?;
    let (mut stats, ll0) = e_step_with_loglik(&model, data)?;
    let mut trace = vec![ll0];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let next = m_step(&stats, data.nrows(), &model, mask)?;
        let (next_stats, ll) = e_step_with_loglik(&next, data)?;
        iterations += 1;
        let gain = ll - trace[trace.len() - 1];
        trace.push(ll);
        model = next;
        stats = next_stats;
        if gain < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        model,
        loglik_trace: trace,
        iterations,
        converged,
        restart_index: index,
        restart_logliks: Vec::new(),
    })
}

/// Best of `cfg.restarts` EM runs; ties go to the lower restart index.
/// Restarts run in parallel with seeds `seed, seed + 1, …`.
pub fn fit(data: &SampleMatrix, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate(data.ncols())?;
    if data.nrows() == 0 {
        return Err(MphError::InvalidArgument("empty data".into()));
    }
    let runs: Vec<Result<FitResult>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_restart(data, cfg, r))
        .collect();
    let logliks: Vec<Option<f64>> = runs.iter().map(|r| r.as_ref().ok().map(FitResult::loglik)).collect();
    let mut best: Option<FitResult> = None;
    let mut first_err = None;
    for run in runs {
        match run {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.loglik() > b.loglik()) {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some(mut b) => {
            b.restart_logliks = logliks;
            Ok(b)
        }
        None => Err(first_err.expect("at least one restart ran")),
    }
}
