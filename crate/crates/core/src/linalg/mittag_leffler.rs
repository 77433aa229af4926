//! Scalar two-parameter Mittag-Leffler function `E_{α,β}(z) = Σ z^k / Γ(αk + β)`
//! for complex arguments.
//!
//! Small arguments use the power series. Larger ones invert the Laplace
//! transform `s^{α-β} / (s^α - z)` on an optimal parabolic contour (Garrappa's
//! method), adding the residues of the poles that fall to the right of it.

use std::f64::consts::PI;

use num_complex::Complex64;
use statrs::function::gamma::{gamma, ln_gamma};

const LOG_EPS: f64 = -36.043653389117154;

/// `1/Γ(x)` for real `x`, exact zero at the poles of Γ.
pub fn recip_gamma(x: f64) -> f64 {
    if x <= 0.0 && x.fract() == 0.0 {
        return 0.0;
    }
    if x > 170.0 {
        return (-ln_gamma(x)).exp();
    }
    1.0 / gamma(x)
}

/// Evaluates `E_{α,β}(z)`.
///
/// `series_radius` selects the power series for `|z| <= series_radius`;
/// `tol` is the target absolute accuracy of the contour integral.
pub fn mittag_leffler(z: Complex64, alpha: f64, beta: f64, series_radius: f64, tol: f64) -> Complex64 {
    if alpha == 1.0 && beta == 1.0 {
        return z.exp();
    }
    if z.norm() <= series_radius {
        return series(z, alpha, beta);
    }
    let e = contour(z, alpha, beta, tol.ln());
    if z.im == 0.0 {
        Complex64::new(e.re, 0.0)
    } else {
        e
    }
}

fn series(z: Complex64, alpha: f64, beta: f64) -> Complex64 {
    let mut sum = Complex64::new(recip_gamma(beta), 0.0);
    let mut zk = Complex64::new(1.0, 0.0);
    let mut small_run = 0;
    for k in 1..2000 {
        zk *= z;
        let term = zk * recip_gamma(alpha * k as f64 + beta);
        sum += term;
        if term.norm() <= 1e-17 * sum.norm().max(1e-300) {
            small_run += 1;
            if small_run >= 3 {
                break;
            }
        } else {
            small_run = 0;
        }
    }
    sum
}

struct ContourParams {
    mu: f64,
    h: f64,
    n: f64,
}

fn contour(lambda: Complex64, alpha: f64, beta: f64, mut log_epsilon: f64) -> Complex64 {
    let t = 1.0;
    let theta = lambda.arg();
    let kmin = (-alpha / 2.0 - theta / (2.0 * PI)).ceil() as i64;
    let kmax = (alpha / 2.0 - theta / (2.0 * PI)).floor() as i64;
    let radius = lambda.norm().powf(1.0 / alpha);

    let mut poles: Vec<(f64, Complex64)> = (kmin..=kmax)
        .map(|k| {
            let s = Complex64::from_polar(radius, (theta + 2.0 * k as f64 * PI) / alpha);
            ((s.re + s.norm()) / 2.0, s)
        })
        .filter(|(phi, _)| *phi > 1e-15)
        .collect();
    poles.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut s_star = vec![Complex64::new(0.0, 0.0)];
    let mut phi_star = vec![0.0];
    for (phi, s) in &poles {
        s_star.push(*s);
        phi_star.push(*phi);
    }
    let j1 = s_star.len();
    phi_star.push(f64::INFINITY);

    let mut p_strength = vec![1.0; j1];
    p_strength[0] = (-2.0 * (alpha - beta + 1.0)).max(0.0);
    let mut q_strength = vec![1.0; j1];
    q_strength[j1 - 1] = f64::INFINITY;

    let admissible: Vec<usize> = (0..j1)
        .filter(|&j| phi_star[j] < (log_epsilon - LOG_EPS) / t && phi_star[j] < phi_star[j + 1])
        .collect();

    let mut params: Vec<(usize, ContourParams)>;
    loop {
        params = admissible
            .iter()
            .map(|&j| {
                let cp = if j < j1 - 1 {
                    optimal_bounded(t, phi_star[j], phi_star[j + 1], p_strength[j], q_strength[j], log_epsilon)
                } else {
                    optimal_unbounded(t, phi_star[j], p_strength[j], log_epsilon)
                };
                (j, cp)
            })
            .collect();
        let min_n = params.iter().map(|(_, c)| c.n).fold(f64::INFINITY, f64::min);
        if min_n > 200.0 {
            log_epsilon += 10f64.ln();
        } else {
            break;
        }
    }

    let (region, best) = params
        .into_iter()
        .min_by(|a, b| a.1.n.total_cmp(&b.1.n))
        .expect("at least one admissible region");
    let n = best.n as i64;
    let (mu, h) = (best.mu, best.h);

    let mut integral = Complex64::new(0.0, 0.0);
    for k in -n..=n {
        let u = h * k as f64;
        let z = mu * (Complex64::new(1.0, u)).powi(2);
        let zd = Complex64::new(-2.0 * mu * u, 2.0 * mu);
        let f = z.powf(alpha - beta) / (z.powf(alpha) - lambda) * zd;
        integral += (z * t).exp() * f;
    }
    integral *= h / (2.0 * PI * Complex64::new(0.0, 1.0));

    let residues: Complex64 = s_star[region + 1..]
        .iter()
        .map(|s| s.powf(1.0 - beta) * (s * t).exp() / alpha)
        .sum();

    integral + residues
}

fn optimal_bounded(t: f64, phi_j: f64, phi_j1: f64, pj: f64, qj: f64, mut log_epsilon: f64) -> ContourParams {
    let fac = 1.01;
    let f_max = (log_epsilon - LOG_EPS).exp();
    let sq_phi_j = phi_j.sqrt();
    let threshold = 2.0 * ((log_epsilon - LOG_EPS) / t).sqrt();
    let sq_phi_j1 = phi_j1.sqrt().min(threshold - sq_phi_j);

    let (sq_bar_j, sq_bar_j1, f_bar) = if pj < 1e-14 && qj < 1e-14 {
        (sq_phi_j, sq_phi_j1, 1.0)
    } else if pj < 1e-14 {
        let f_min = if sq_phi_j > 0.0 {
            fac * (sq_phi_j / (sq_phi_j1 - sq_phi_j)).powf(qj)
        } else {
            fac
        };
        if f_min >= f_max {
            return ContourParams { mu: 0.0, h: 0.0, n: f64::INFINITY };
        }
        let f_bar = f_min + f_min / f_max * (f_max - f_min);
        let fq = f_bar.powf(-1.0 / qj);
        (sq_phi_j, (2.0 * sq_phi_j1 - fq * sq_phi_j) / (2.0 + fq), f_bar)
    } else if qj < 1e-14 {
        let f_min = fac * (sq_phi_j1 / (sq_phi_j1 - sq_phi_j)).powf(pj);
        if f_min >= f_max {
            return ContourParams { mu: 0.0, h: 0.0, n: f64::INFINITY };
        }
        let f_bar = f_min + f_min / f_max * (f_max - f_min);
        let fp = f_bar.powf(-1.0 / pj);
        ((2.0 * sq_phi_j + fp * sq_phi_j1) / (2.0 - fp), sq_phi_j1, f_bar)
    } else {
        let mut f_min = fac * (sq_phi_j + sq_phi_j1) / (sq_phi_j1 - sq_phi_j).powf(pj.max(qj));
        if f_min >= f_max {
            return ContourParams { mu: 0.0, h: 0.0, n: f64::INFINITY };
        }
        f_min = f_min.max(1.5);
        let f_bar = f_min + f_min / f_max * (f_max - f_min);
        let fp = f_bar.powf(-1.0 / pj);
        let fq = f_bar.powf(-1.0 / qj);
        let w = -phi_j1 * t / log_epsilon;
        let den = 2.0 + w - (1.0 + w) * fp + fq;
        let a = ((2.0 + w + fq) * sq_phi_j + fp * sq_phi_j1) / den;
        let b = (-(1.0 + w) * fq * sq_phi_j + (2.0 + w - (1.0 + w) * fp) * sq_phi_j1) / den;
        (a, b, f_bar)
    };

    log_epsilon -= f_bar.ln();
    let w = -sq_bar_j1 * sq_bar_j1 * t / log_epsilon;
    let mu = (((1.0 + w) * sq_bar_j + sq_bar_j1) / (2.0 + w)).powi(2);
    let h = -2.0 * PI / log_epsilon * (sq_bar_j1 - sq_bar_j) / ((1.0 + w) * sq_bar_j + sq_bar_j1);
    let n = ((1.0 - log_epsilon / t / mu).sqrt() / h).ceil();
    ContourParams { mu, h, n }
}

fn optimal_unbounded(t: f64, phi_j: f64, pj: f64, log_epsilon: f64) -> ContourParams {
    let sq_phi_j = phi_j.sqrt();
    let mut phibar = if phi_j > 0.0 { phi_j * 1.01 } else { 0.01 };
    let mut sq_phibar = phibar.sqrt();
    let (f_min, f_max, f_tar) = (1.0f64, 10.0f64, 5.0f64);

    let (mut mu, mut h, mut n);
    let mut guard = 0;
    loop {
        let phi_t = phibar * t;
        let log_eps_phi_t = log_epsilon / phi_t;
        n = (phi_t / PI * (1.0 - 1.5 * log_eps_phi_t + (1.0 - 2.0 * log_eps_phi_t).sqrt())).ceil();
        let a = PI * n / phi_t;
        let sq_mu = sq_phibar * (4.0 - a).abs() / (7.0 - (1.0 + 12.0 * a).sqrt()).abs();
        let fbar = ((sq_phibar - sq_phi_j) / sq_mu).powf(-pj);
        mu = sq_mu * sq_mu;
        h = (-3.0 * a - 2.0 + 2.0 * (1.0 + 12.0 * a).sqrt()) / (4.0 - a) / n;
        guard += 1;
        if pj < 1e-14 || (f_min < fbar && fbar < f_max) || guard > 100 {
            break;
        }
        sq_phibar = f_tar.powf(-1.0 / pj) * sq_mu + sq_phi_j;
        phibar = sq_phibar * sq_phibar;
    }

    let threshold = (log_epsilon - LOG_EPS) / t;
    if mu > threshold {
        let q = if pj.abs() < 1e-14 { 0.0 } else { f_tar.powf(-1.0 / pj) * mu.sqrt() };
        let phibar = (q + phi_j.sqrt()).powi(2);
        if phibar < threshold {
            let w = (LOG_EPS / (LOG_EPS - log_epsilon)).sqrt();
            let u = (-phibar * t / LOG_EPS).sqrt();
            mu = threshold;
            n = (w * log_epsilon / 2.0 / PI / (u * w - 1.0)).ceil();
            h = (LOG_EPS / (LOG_EPS - log_epsilon)).sqrt() / n;
        } else {
            n = f64::INFINITY;
            h = 0.0;
        }
    }
    ContourParams { mu, h, n }
}
