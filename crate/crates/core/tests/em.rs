mod common;

use common::*;
use mph::em::{
    degrees_of_freedom, e_step, e_step_with_loglik, fit, initialize, log_likelihood, m_step, FitConfig, FitReport,
};
use mph::{sample, MphError, MphModel, SampleMatrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[test]
fn univariate_e_step_matches_classical_formulas() {
    let model = random_model(31, 3, 1, 0.2, 2.0);
    let t = model.component(0).to_dense();
    let xs = [0.05, 0.4, 1.3, 3.7];
    let data = SampleMatrix::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap();
    let stats = e_step(&model, &data).unwrap();
    let mut b = DVector::zeros(3);
    let mut z = DVector::zeros(3);
    let mut nt = DMatrix::zeros(3, 3);
    let mut ne = DVector::zeros(3);
    for &x in &xs {
        let (rb, rz, rnt, rne) = univariate_estep_row(model.pi(), &t, x);
        b += rb;
        z += rz;
        nt += rnt;
        ne += rne;
    }
    let close = |a: f64, w: f64| (a - w).abs() <= 1e-10 * w.abs().max(1.0);
    for k in 0..3 {
        assert!(close(stats.b[k], b[k]), "B[{k}]");
        assert!(close(stats.z[0][k], z[k]), "Z[{k}]: {} vs {}", stats.z[0][k], z[k]);
        assert!(close(stats.n_exit[0][k], ne[k]), "N[{k}]");
        for s in 0..3 {
            if s != k {
                assert!(close(stats.n_trans[0][(k, s)], nt[(k, s)]), "N[{k},{s}]");
            }
        }
    }
}

#[test]
fn expected_statistics_satisfy_identities() {
    let model = random_model(3, 4, 2, 0.2, 2.0);
    let data = sample(&model, 500, 4).unwrap();
    let stats = e_step(&model, &data).unwrap();
    let n = 500.0;
    assert!((stats.b.sum() - 2.0 * n).abs() < 1e-9);
    for i in 0..2 {
        assert!((stats.n_exit[i].sum() - n).abs() < 1e-9);
        let total: f64 = data.column(i).iter().sum();
        assert!((stats.z[i].sum() - total).abs() < 1e-9 * total);
        for k in 0..4 {
            let inflow = stats.b[k] / 2.0 + stats.n_trans[i].column(k).sum() - stats.n_trans[i][(k, k)];
            let outflow = stats.n_exit[i][k] + stats.n_trans[i].row(k).sum() - stats.n_trans[i][(k, k)];
            assert!((inflow - outflow).abs() < 1e-8 * n, "margin {i}, state {k}");
        }
    }
}

#[test]
fn loglik_from_e_step_matches_density_sum() {
    let model = random_model(6, 3, 2, 0.2, 2.0);
    let data = sample(&model, 300, 2).unwrap();
    let (_, ll) = e_step_with_loglik(&model, &data).unwrap();
    let direct: f64 = data.rows().map(|r| model.density(r).unwrap().ln()).sum();
    assert!((ll - direct).abs() < 1e-9 * direct.abs());
    assert!((log_likelihood(&model, &data).unwrap() - direct).abs() < 1e-9 * direct.abs());
}

#[test]
fn underflowing_row_is_reported() {
    let model = random_model(6, 2, 2, 1.0, 2.0);
    let data = SampleMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 2000.0]]).unwrap();
    match e_step(&model, &data) {
        Err(MphError::DensityUnderflow { row }) => assert_eq!(row, 1),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn structure_mask_zeros_survive_fitting() {
    let truth = random_model(40, 3, 2, 0.2, 2.0);
    let data = sample(&truth, 400, 3).unwrap();
    let mut mask = DMatrix::from_element(3, 3, true);
    mask[(0, 2)] = false;
    mask[(2, 1)] = false;
    let cfg = FitConfig {
        p: 3,
        max_iters: 30,
        structure_mask: Some(vec![mask.clone(), DMatrix::from_element(3, 3, true)]),
        ..FitConfig::default()
    };
    let res = fit(&data, &cfg).unwrap();
    let t = res.model.component(0).to_dense();
    assert_eq!(t[(0, 2)], 0.0);
    assert_eq!(t[(2, 1)], 0.0);
    let init = initialize(3, 2, 9, &data, cfg.structure_mask.as_ref()).unwrap();
    assert_eq!(init.component(0).to_dense()[(0, 2)], 0.0);
}

#[test]
fn m_step_fixed_point_for_exponential() {
    // One state, one margin: the MLE rate is n / Σx after a single step.
    let data = SampleMatrix::from_rows(&[vec![0.5], vec![1.5], vec![2.0]]).unwrap();
    let start = MphModel::from_dense(vec![1.0], vec![DMatrix::from_element(1, 1, -3.0)]).unwrap();
    let stats = e_step(&start, &data).unwrap();
    let next = m_step(&stats, 3, &start, None).unwrap();
    assert!((next.component(0).entry(0, 0) + 0.75).abs() < 1e-14);
}

#[test]
fn fit_reaches_generating_likelihood() {
    let truth = random_model(50, 2, 2, 0.3, 3.0);
    let data = sample(&truth, 2000, 11).unwrap();
    let cfg = FitConfig {
        p: 2,
        restarts: 2,
        seed: 5,
        max_iters: 300,
        tol: 1e-6,
        ..FitConfig::default()
    };
    let res = fit(&data, &cfg).unwrap();
    let truth_ll = log_likelihood(&truth, &data).unwrap();
    assert!(res.loglik() >= truth_ll - 1.0, "{} vs {truth_ll}", res.loglik());
    let best = res.restart_logliks.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(res.restart_logliks[res.restart_index], Some(best));
}

#[test]
fn fit_is_reproducible() {
    let data = sample(&random_model(8, 3, 2, 0.3, 2.0), 300, 1).unwrap();
    let cfg = FitConfig {
        p: 3,
        max_iters: 50,
        restarts: 2,
        seed: 42,
        ..FitConfig::default()
    };
    assert_eq!(fit(&data, &cfg).unwrap(), fit(&data, &cfg).unwrap());
}

#[test]
fn report_criteria() {
    assert_eq!(degrees_of_freedom(4, 2), 35);
    let data = sample(&random_model(8, 2, 2, 0.3, 2.0), 200, 1).unwrap();
    let cfg = FitConfig {
        p: 2,
        max_iters: 5,
        ..FitConfig::default()
    };
    let res = fit(&data, &cfg).unwrap();
    assert!(!res.converged);
    assert_eq!(res.iterations, 5);
    let rep = FitReport::new(&res, 200);
    let ll = res.loglik();
    let df = degrees_of_freedom(2, 2) as f64;
    assert!((rep.aic - (2.0 * df - 2.0 * ll)).abs() < 1e-9);
    assert!((rep.bic - (df * 200f64.ln() - 2.0 * ll)).abs() < 1e-9);
}

#[test]
fn invalid_configuration_is_rejected() {
    let data = SampleMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
    for cfg in [
        FitConfig { p: 0, ..FitConfig::default() },
        FitConfig { tol: 0.0, ..FitConfig::default() },
        FitConfig { restarts: 0, ..FitConfig::default() },
        FitConfig {
            structure_mask: Some(vec![DMatrix::from_element(2, 2, true)]),
            ..FitConfig::default()
        },
    ] {
        assert!(fit(&data, &cfg).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn em_never_decreases_loglik(seed in any::<u64>(), p in 1usize..4, d in 1usize..3) {
        let data = sample(&random_model(seed, 2, d, 0.3, 2.0), 150, seed ^ 3).unwrap();
        let cfg = FitConfig { p, max_iters: 25, seed, ..FitConfig::default() };
        let res = fit(&data, &cfg).unwrap();
        for w in res.loglik_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
    }
}
