//! Independent reference computations for the integration tests. Nothing
//! here calls into the library's numerical kernels.

#![allow(dead_code)]

use mph::MphModel;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `e^A` by scaling, a long Taylor series, and repeated squaring.
pub fn taylor_expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.iter().map(|v| v.abs()).fold(0.0, f64::max) * n as f64;
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.25 {
        s += 1;
    }
    let b = a / 2f64.powi(s);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..40 {
        term = &term * &b / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Composite Gauss-Legendre rule over `panels` equal pieces of `[a, b]`.
pub fn composite_gl<F: FnMut(f64) -> Vec<f64>>(mut f: F, a: f64, b: f64, panels: usize, order: usize) -> Vec<f64> {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total: Vec<f64> = Vec::new();
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            let v = f(lo + 0.5 * h * (xi + 1.0));
            if total.is_empty() {
                total = vec![0.0; v.len()];
            }
            for (t, vi) in total.iter_mut().zip(v) {
                *t += 0.5 * h * wi * vi;
            }
        }
    }
    total
}

/// Adaptive Simpson on vector integrands, splitting until the Richardson
/// estimate is below `tol` in every component.
pub fn adaptive_simpson<F: FnMut(f64) -> Vec<f64>>(f: &mut F, a: f64, b: f64, tol: f64) -> Vec<f64> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, &fa, &fm, &fb);
    simpson_rec(f, a, b, &fa, &fm, &fb, &whole, tol, 50)
}

fn simpson(a: f64, b: f64, fa: &[f64], fm: &[f64], fb: &[f64]) -> Vec<f64> {
    (0..fa.len()).map(|q| (b - a) / 6.0 * (fa[q] + 4.0 * fm[q] + fb[q])).collect()
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: FnMut(f64) -> Vec<f64>>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: &[f64],
    fm: &[f64],
    fb: &[f64],
    whole: &[f64],
    tol: f64,
    depth: usize,
) -> Vec<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, &flm, fm);
    let right = simpson(m, b, fm, &frm, fb);
    let err = (0..whole.len())
        .map(|q| (left[q] + right[q] - whole[q]).abs())
        .fold(0.0, f64::max);
    if depth == 0 || err <= 15.0 * tol {
        return (0..whole.len())
            .map(|q| left[q] + right[q] + (left[q] + right[q] - whole[q]) / 15.0)
            .collect();
    }
    let l = simpson_rec(f, a, m, fa, &flm, fm, &left, 0.5 * tol, depth - 1);
    let r = simpson_rec(f, m, b, fm, &frm, fb, &right, 0.5 * tol, depth - 1);
    l.iter().zip(&r).map(|(x, y)| x + y).collect()
}

/// Density `Σ_j π_j Π_i e_jᵀ e^{T_i x_i} t_i`, transcribed with dense Taylor exponentials.
pub fn density_transcribed(pi: &[f64], t: &[DMatrix<f64>], x: &[f64]) -> f64 {
    let p = pi.len();
    let per_margin: Vec<DVector<f64>> = t
        .iter()
        .zip(x)
        .map(|(ti, &xi)| {
            let exit = -ti * DVector::from_element(p, 1.0);
            taylor_expm(&(ti * xi)) * exit
        })
        .collect();
    (0..p)
        .map(|j| pi[j] * per_margin.iter().map(|v| v[j]).product::<f64>())
        .sum()
}

/// Random sub-intensity of order `p` with every rate in `[lo, hi]`.
pub fn random_subintensity(rng: &mut ChaCha8Rng, p: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(p, p);
    for k in 0..p {
        let mut sum = 0.0;
        for s in 0..p {
            if s != k {
                let v = rng.random_range(lo..hi);
                t[(k, s)] = v;
                sum += v;
            }
        }
        let exit = rng.random_range(lo..hi);
        t[(k, k)] = -(sum + exit);
    }
    t
}

pub fn random_pi(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..p).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

pub fn random_model(seed: u64, p: usize, d: usize, lo: f64, hi: f64) -> MphModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pi = random_pi(&mut rng, p);
    let mats = (0..d).map(|_| random_subintensity(&mut rng, p, lo, hi)).collect();
    MphModel::from_dense(pi, mats).expect("random model is valid")
}

/// Univariate PH E-step for one observation, following the classical
/// single-chain formulas with quadrature for the convolution integrals.
/// Returns `(B, Z, N_trans, N_exit)` contributions.
pub fn univariate_estep_row(
    pi: &DVector<f64>,
    t: &DMatrix<f64>,
    x: f64,
) -> (DVector<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
    let p = pi.len();
    let exit = -t * DVector::from_element(p, 1.0);
    let ex = taylor_expm(&(t * x));
    let b = &ex * &exit;
    let f = pi.dot(&b);
    let a = (pi.transpose() * &ex).transpose();
    let big_b = DVector::from_fn(p, |k, _| pi[k] * b[k] / f);
    let n_exit = DVector::from_fn(p, |k, _| exit[k] * a[k] / f);
    // ∫_0^x (π e^{Tu})_k (e^{T(x-u)} t)_s du for all k, s.
    let flat = composite_gl(
        |u| {
            let left = (pi.transpose() * taylor_expm(&(t * u))).transpose();
            let right = taylor_expm(&(t * (x - u))) * &exit;
            let mut v = Vec::with_capacity(p * p);
            for k in 0..p {
                for s in 0..p {
                    v.push(left[k] * right[s]);
                }
            }
            v
        },
        0.0,
        x,
        40,
        20,
    );
    let c = DMatrix::from_row_slice(p, p, &flat);
    let z = DVector::from_fn(p, |k, _| c[(k, k)] / f);
    let n_trans = DMatrix::from_fn(p, p, |k, s| if k == s { 0.0 } else { t[(k, s)] * c[(k, s)] / f });
    (big_b, z, n_trans, n_exit)
}

/// Kolmogorov-Smirnov distance between a sample and a CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// 0-based ranks of a tie-free sample.
pub fn ranks(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0; v.len()];
    for (rank, &i) in idx.iter().enumerate() {
        r[i] = rank;
    }
    r
}

pub fn pearson_sample(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn spearman_sample(x: &[f64], y: &[f64]) -> f64 {
    let rx: Vec<f64> = ranks(x).into_iter().map(|r| r as f64).collect();
    let ry: Vec<f64> = ranks(y).into_iter().map(|r| r as f64).collect();
    pearson_sample(&rx, &ry)
}

/// Sample Kendall tau and its jackknife standard error, in `O(n log n)`.
pub fn kendall_with_jackknife(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len();
    let rx = ranks(x);
    let ry = ranks(y);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| rx[i]);
    // Fenwick tree over y-ranks of points already visited (smaller x).
    let mut tree = vec![0i64; n + 1];
    let mut lower_left = vec![0i64; n];
    for &i in &order {
        let mut q = ry[i];
        let mut c = 0;
        while q > 0 {
            c += tree[q];
            q &= q - 1;
        }
        lower_left[i] = c;
        let mut q = ry[i] + 1;
        while q <= n {
            tree[q] += 1;
            q += q & q.wrapping_neg();
        }
    }
    let nn = n as i64;
    let s: Vec<i64> = (0..n)
        .map(|i| {
            let ll = lower_left[i];
            let ur = (nn - 1) - rx[i] as i64 - ry[i] as i64 + ll;
            let conc = ll + ur;
            2 * conc - (nn - 1)
        })
        .collect();
    let k: i64 = s.iter().sum::<i64>() / 2;
    let pairs = (n * (n - 1) / 2) as f64;
    let tau = k as f64 / pairs;
    let pairs_minus = ((n - 1) * (n - 2) / 2) as f64;
    let loo: Vec<f64> = s.iter().map(|&si| (k - si) as f64 / pairs_minus).collect();
    let mean = loo.iter().sum::<f64>() / n as f64;
    let var = loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>() * (n as f64 - 1.0) / n as f64;
    (tau, var.sqrt())
}

/// Standard error of a statistic from `batches` equal batches.
pub fn batch_se(x: &[f64], y: &[f64], batches: usize, stat: impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    let m = x.len() / batches;
    let vals: Vec<f64> = (0..batches)
        .map(|b| stat(&x[b * m..(b + 1) * m], &y[b * m..(b + 1) * m]))
        .collect();
    let mean = vals.iter().sum::<f64>() / batches as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// Erlang(k, n) CDF.
pub fn erlang_cdf(k: usize, rate: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let lx = rate * x;
    let mut term = (-lx).exp();
    let mut tail = 0.0;
    for j in 0..k {
        if j > 0 {
            term *= lx / j as f64;
        }
        tail += term;
    }
    (1.0 - tail).max(0.0)
}
