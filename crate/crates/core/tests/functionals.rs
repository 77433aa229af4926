mod common;

use common::*;
use mph::{presets, EvalConfig, MomentMethod, MphError, MphModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn dense_components(m: &MphModel) -> (Vec<f64>, Vec<DMatrix<f64>>) {
    (
        m.pi().iter().copied().collect(),
        m.components().iter().map(|t| t.to_dense()).collect(),
    )
}

fn marginal_survival_oracle(pi: &[f64], t: &DMatrix<f64>, x: f64) -> f64 {
    let p = pi.len();
    let v = taylor_expm(&(t * x)) * DVector::from_element(p, 1.0);
    pi.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn density_matches_transcription(seed in any::<u64>(), p in 1usize..6, d in 1usize..4,
                                     x in prop::collection::vec(0.01f64..3.0, 3)) {
        let m = random_model(seed, p, d, 0.1, 2.0);
        let (pi, t) = dense_components(&m);
        let want = density_transcribed(&pi, &t, &x[..d]);
        prop_assert!(rel(m.density(&x[..d]).unwrap(), want) < 1e-11);
    }

    #[test]
    fn survival_matches_kronecker_form(seed in any::<u64>(), p in 1usize..5, d in 1usize..4,
                                       x in prop::collection::vec(0.0f64..3.0, 3)) {
        let m = random_model(seed, p, d, 0.1, 2.0);
        let cfg = EvalConfig::default();
        let a = m.survival(&x[..d]).unwrap();
        let b = m.survival_kron(&x[..d], &cfg).unwrap();
        prop_assert!((a - b).abs() < 1e-13);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn bivariate_inclusion_exclusion(seed in any::<u64>(), p in 1usize..6, x1 in 0.0f64..4.0, x2 in 0.0f64..4.0) {
        let m = random_model(seed, p, 2, 0.1, 2.0);
        let (pi, t) = dense_components(&m);
        let s1 = marginal_survival_oracle(&pi, &t[0], x1);
        let s2 = marginal_survival_oracle(&pi, &t[1], x2);
        let f = m.cdf(&[x1, x2]).unwrap();
        let s = m.survival(&[x1, x2]).unwrap();
        prop_assert!((f + s1 + s2 - s - 1.0).abs() < 1e-13);
    }

    #[test]
    fn density_is_mixed_partial_of_survival(seed in any::<u64>(), p in 1usize..5, x1 in 0.2f64..3.0, x2 in 0.2f64..3.0) {
        let m = random_model(seed, p, 2, 0.1, 2.0);
        let h = 1e-3;
        let s = |a: f64, b: f64| m.survival(&[a, b]).unwrap();
        let fd = (s(x1 + h, x2 + h) - s(x1 + h, x2 - h) - s(x1 - h, x2 + h) + s(x1 - h, x2 - h)) / (4.0 * h * h);
        let f = m.density(&[x1, x2]).unwrap();
        prop_assert!((fd - f).abs() < 1e-5 * f.max(1e-3), "fd {} vs {}", fd, f);
    }

    #[test]
    fn marginal_quantile_inverts_cdf(seed in any::<u64>(), p in 1usize..6, u in 0.001f64..0.999) {
        let m = random_model(seed, p, 2, 0.1, 2.0);
        let ph = m.marginal(1).unwrap();
        let q = ph.quantile(u, 1e-12).unwrap();
        prop_assert!((ph.cdf(q) - u).abs() < 1e-9);
    }

    #[test]
    fn rank_measures_ignore_margin_scaling(seed in any::<u64>(), p in 1usize..5, c in 0.1f64..10.0) {
        let m = random_model(seed, p, 2, 0.1, 2.0);
        let scaled = m.with_scaled_component(0, c);
        let cfg = EvalConfig::default();
        prop_assert!((m.kendall(0, 1, &cfg).unwrap() - scaled.kendall(0, 1, &cfg).unwrap()).abs() < 1e-10);
        prop_assert!((m.spearman(0, 1, &cfg).unwrap() - scaled.spearman(0, 1, &cfg).unwrap()).abs() < 1e-10);
        prop_assert!((m.pearson(0, 1, &cfg).unwrap() - scaled.pearson(0, 1, &cfg).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn dependence_measures_are_symmetric_and_bounded(seed in any::<u64>(), p in 1usize..6) {
        let m = random_model(seed, p, 3, 0.1, 2.0);
        let cfg = EvalConfig::default();
        for (k, l) in [(0, 1), (0, 2), (1, 2)] {
            for f in [MphModel::kendall, MphModel::spearman, MphModel::pearson] {
                let a = f(&m, k, l, &cfg).unwrap();
                let b = f(&m, l, k, &cfg).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&a));
            }
        }
    }
}

#[test]
fn laplace_matches_double_quadrature() {
    let m = random_model(11, 3, 2, 0.5, 2.0);
    let (pi, t) = dense_components(&m);
    for u in [[0.5, 0.5], [1.0, 2.0], [3.0, 0.7]] {
        let inner = |x1: f64| {
            composite_gl(
                |x2| vec![(-u[0] * x1 - u[1] * x2).exp() * density_transcribed(&pi, &t, &[x1, x2])],
                0.0,
                30.0,
                30,
                20,
            )
        };
        let want = composite_gl(inner, 0.0, 30.0, 30, 20)[0];
        let got = m.laplace(&u).unwrap();
        assert!(rel(got, want) < 1e-9, "u {u:?}: {got} vs {want}");
    }
}

#[test]
fn integer_moments_match_explicit_inverses() {
    let m = random_model(5, 4, 2, 0.1, 2.0);
    let (pi, t) = dense_components(&m);
    let ones = DVector::from_element(4, 1.0);
    let u: Vec<DMatrix<f64>> = t.iter().map(|ti| (-ti).try_inverse().unwrap()).collect();
    let cfg = EvalConfig::default();
    for (a, b) in [(1u32, 0u32), (0, 1), (1, 1), (2, 1), (3, 2)] {
        let fact = |k: u32| (1..=k).product::<u32>() as f64;
        let va = fact(a) * u[0].pow(a) * &ones;
        let vb = fact(b) * u[1].pow(b) * &ones;
        let want: f64 = (0..4).map(|j| pi[j] * va[j] * vb[j]).sum();
        let got = m.moment(&[a as f64, b as f64], &cfg).unwrap();
        assert_eq!(got.method, MomentMethod::ClosedForm);
        assert!(rel(got.value, want) < 1e-12, "({a},{b}): {} vs {want}", got.value);
    }
}

#[test]
fn fractional_marginal_moment_matches_quadrature() {
    let m = random_model(8, 3, 2, 0.3, 2.0);
    let (pi, t) = dense_components(&m);
    let t1 = t[0].clone();
    let exit = -&t1 * DVector::from_element(3, 1.0);
    let cfg = EvalConfig::default();
    for theta in [0.5, 1.3, 2.7] {
        // x = y², which removes the endpoint singularity of x^θ.
        let want = composite_gl(
            |y| {
                let x = y * y;
                let f = (DVector::from_vec(pi.clone()).transpose() * taylor_expm(&(&t1 * x)) * &exit)[0];
                vec![2.0 * y * x.powf(theta) * f]
            },
            0.0,
            12.0,
            200,
            20,
        )[0];
        let got = m.moment(&[theta, 0.0], &cfg).unwrap().value;
        assert!(rel(got, want) < 1e-9, "theta {theta}: {got} vs {want}");
    }
}

#[test]
fn defective_generator_falls_back_to_quadrature() {
    // Margin 1 is Erlang(2, 1); its generator is a Jordan block.
    let t1 = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
    let t2 = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -2.0]);
    let m = MphModel::from_dense(vec![1.0, 0.0], vec![t1, t2]).unwrap();
    let got = m.moment(&[0.5, 0.0], &EvalConfig::default()).unwrap();
    assert_eq!(got.method, MomentMethod::Quadrature);
    let want = 1.329_340_388_179_137; // Γ(2.5)
    assert!(rel(got.value, want) < 1e-8, "{}", got.value);
}

#[test]
fn independent_margins_have_unit_copula_and_zero_dependence() {
    let t1 = DMatrix::from_element(1, 1, -2.0);
    let t2 = DMatrix::from_element(1, 1, -0.5);
    let m = MphModel::from_dense(vec![1.0], vec![t1, t2]).unwrap();
    let cfg = EvalConfig::default();
    assert!(m.kendall(0, 1, &cfg).unwrap().abs() < 1e-14);
    assert!(m.spearman(0, 1, &cfg).unwrap().abs() < 1e-14);
    assert!(m.pearson(0, 1, &cfg).unwrap().abs() < 1e-14);
    let grid = [(0.1, 0.2), (0.5, 0.5), (0.9, 0.05)];
    for c in m.copula_density_grid(0, 1, &grid, &cfg).unwrap() {
        assert!((c - 1.0).abs() < 1e-8, "{c}");
    }
}

#[test]
fn copula_grid_is_a_density() {
    let m = presets::permuted_rates([0, 1, 2]);
    let r = 60;
    let axis: Vec<f64> = (0..r).map(|i| (i as f64 + 0.5) / r as f64).collect();
    let grid: Vec<(f64, f64)> = axis.iter().flat_map(|&u| axis.iter().map(move |&v| (u, v))).collect();
    let c = m.copula_density_grid(0, 1, &grid, &EvalConfig::default()).unwrap();
    assert!(c.iter().all(|v| *v >= 0.0 && v.is_finite()));
    let mass: f64 = c.iter().sum::<f64>() / (r * r) as f64;
    assert!((mass - 1.0).abs() < 0.05, "mass {mass}");
}

#[test]
fn copula_grid_rejects_boundary_points() {
    let m = presets::permuted_rates([0, 1, 2]);
    let cfg = EvalConfig::default();
    for pt in [(0.0, 0.5), (0.5, 1.0), (-0.1, 0.5)] {
        assert!(matches!(m.copula_density_grid(0, 1, &[pt], &cfg), Err(MphError::Domain(_))));
    }
}

#[test]
fn permuted_models_share_margins_up_to_relabeling() {
    let cfg = EvalConfig::default();
    let taus: Vec<f64> = presets::PERMUTATIONS
        .iter()
        .map(|&perm| presets::permuted_rates(perm).kendall(0, 1, &cfg).unwrap())
        .collect();
    // [1,2,0] and [2,0,1] are inverse permutations and give the same joint law up to swapping margins.
    assert!((taus[3] - taus[4]).abs() < 1e-12);
    let mut distinct = taus.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    assert_eq!(distinct.len(), 5);
}

#[test]
fn select_matches_marginal() {
    let m = random_model(21, 4, 3, 0.1, 2.0);
    let s = m.select(&[2]).unwrap();
    let ph = m.marginal(2).unwrap();
    for x in [0.1, 0.7, 2.5] {
        assert!(rel(s.density(&[x]).unwrap(), ph.density(x)) < 1e-13);
    }
    let pair = m.select(&[2, 0]).unwrap();
    assert!(rel(pair.survival(&[0.4, 1.1]).unwrap(), m.survival(&[1.1, 0.0, 0.4]).unwrap()) < 1e-13);
}

#[test]
fn json_round_trip_is_exact() {
    let m = random_model(3, 4, 3, 0.1, 2.0);
    let back = MphModel::from_json(&m.to_json()).unwrap();
    assert_eq!(m, back);
}

#[test]
fn validation_reports_offending_entry() {
    let bad = r#"{"p": 2, "d": 1, "pi": [0.5, 0.5], "T": [[[1.0, 0.0], [0.0, -1.0]]]}"#;
    match MphModel::from_json(bad) {
        Err(MphError::Validation { path, message }) => {
            assert!(path.starts_with("T[0]"), "{path}");
            assert!(message.contains("diagonal"), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }
    let bad_pi = r#"{"p": 2, "d": 1, "pi": [0.5, 0.6], "T": [[[-1.0, 0.0], [0.0, -1.0]]]}"#;
    assert!(matches!(MphModel::from_json(bad_pi), Err(MphError::Validation { .. })));
    let m = random_model(1, 2, 2, 0.1, 1.0);
    assert!(matches!(m.density(&[1.0]), Err(MphError::DimensionMismatch(_))));
    assert!(matches!(m.density(&[1.0, -1.0]), Err(MphError::Domain(_))));
}
