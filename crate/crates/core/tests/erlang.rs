mod common;

use std::collections::BTreeMap;

use common::*;
use mph::erlang::{approximation_error, build_erlang_mixture, discretize_cdf, discretize_sample, Cell, ErlangMixtureSpec};
use mph::{sample, MphError, SampleMatrix};
use proptest::prelude::*;

fn exp_pair(r1: f64, r2: f64) -> impl Fn(&[f64]) -> f64 {
    move |x: &[f64]| (1.0 - (-r1 * x[0]).exp()) * (1.0 - (-r2 * x[1]).exp())
}

fn mixture_cdf(spec: &ErlangMixtureSpec, x: &[f64]) -> f64 {
    spec.cells
        .iter()
        .map(|c| c.w * c.k.iter().zip(x).map(|(&k, &xi)| erlang_cdf(k, spec.n as f64, xi)).product::<f64>())
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sample_cells_match_direct_counting(seed in any::<u64>(), n in 1usize..6, m in 1usize..8) {
        let data = sample(&random_model(seed, 2, 2, 0.5, 2.0), 400, seed).unwrap();
        let spec = match discretize_sample(&data, n, &[m, m]) {
            Ok(s) => s,
            Err(_) => return Ok(()),
        };
        let mut counts: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut kept = 0.0;
        for r in data.rows() {
            let k1 = (r[0] * n as f64).ceil() as usize;
            let k2 = (r[1] * n as f64).ceil() as usize;
            if k1 <= m && k2 <= m {
                *counts.entry((k1, k2)).or_default() += 1.0;
                kept += 1.0;
            }
        }
        prop_assert_eq!(spec.cells.len(), counts.len());
        for (cell, ((k1, k2), c)) in spec.cells.iter().zip(&counts) {
            prop_assert_eq!(&cell.k, &vec![*k1, *k2]);
            prop_assert!((cell.w - c / kept).abs() < 1e-14);
        }
    }

    #[test]
    fn built_model_cdf_is_erlang_mixture(seed in any::<u64>(), n in 1usize..4, x1 in 0.0f64..4.0, x2 in 0.0f64..4.0) {
        let data = sample(&random_model(seed, 2, 2, 0.5, 2.0), 200, seed).unwrap();
        let spec = discretize_sample(&data, n, &[2 * n, 2 * n]).unwrap();
        let model = build_erlang_mixture(&spec).unwrap();
        prop_assert_eq!(model.order(), spec.cells.len() * spec.max_shape());
        prop_assert!((model.cdf(&[x1, x2]).unwrap() - mixture_cdf(&spec, &[x1, x2])).abs() < 1e-12);
    }
}

#[test]
fn cdf_cells_are_product_probabilities() {
    let (r1, r2) = (1.0, 0.5);
    let (n, m) = (4, [12, 20]);
    let spec = discretize_cdf(exp_pair(r1, r2), n, &m).unwrap();
    let cell = |r: f64, k: usize| (-r * (k - 1) as f64 / n as f64).exp() - (-r * k as f64 / n as f64).exp();
    let box_mass = (1.0 - (-r1 * 3.0f64).exp()) * (1.0 - (-r2 * 5.0f64).exp());
    assert_eq!(spec.cells.len(), 12 * 20);
    for c in &spec.cells {
        let want = cell(r1, c.k[0]) * cell(r2, c.k[1]) / box_mass;
        assert!((c.w - want).abs() < 1e-13, "{:?}", c.k);
    }
}

#[test]
fn error_shrinks_as_grid_refines() {
    let target = exp_pair(1.0, 2.0);
    let grid: Vec<Vec<f64>> = (1..=8).flat_map(|a| (1..=8).map(move |b| vec![a as f64 * 0.25, b as f64 * 0.25])).collect();
    let mut last = f64::INFINITY;
    for n in [1usize, 2, 4] {
        let spec = discretize_cdf(&target, n, &[6 * n, 6 * n]).unwrap();
        let model = build_erlang_mixture(&spec).unwrap();
        let err = approximation_error(&target, &model, &spec, &grid).unwrap();
        assert!(err.sup_error < last, "n = {n}: {} !< {last}", err.sup_error);
        assert!(err.truncation_bound < 1e-2);
        last = err.sup_error;
    }
}

#[test]
fn non_monotone_target_is_rejected() {
    let bad = |x: &[f64]| if x[0] > 0.5 && x[1] > 0.5 { 0.2 } else { 0.5 * x[0].min(1.0) * x[1].min(1.0) };
    assert!(matches!(discretize_cdf(bad, 4, &[4, 4]), Err(MphError::Validation { .. })));
}

#[test]
fn rows_outside_the_box_are_dropped() {
    let data = SampleMatrix::from_rows(&[vec![0.2, 0.2], vec![0.2, 9.0], vec![0.9, 0.1]]).unwrap();
    let spec = discretize_sample(&data, 2, &[2, 2]).unwrap();
    assert_eq!(
        spec.cells,
        vec![Cell { k: vec![1, 1], w: 0.5 }, Cell { k: vec![2, 1], w: 0.5 }]
    );
    let far = SampleMatrix::from_rows(&[vec![5.0, 5.0]]).unwrap();
    assert!(discretize_sample(&far, 1, &[2, 2]).is_err());
}

#[test]
fn spec_json_round_trip_and_validation() {
    let spec = discretize_cdf(exp_pair(1.0, 1.0), 2, &[3, 3]).unwrap();
    assert_eq!(ErlangMixtureSpec::from_json(&spec.to_json()).unwrap(), spec);
    let bad = r#"{"n": 1, "m": [2], "cells": [{"k": [1], "w": 0.4}, {"k": [2], "w": 0.4}]}"#;
    assert!(ErlangMixtureSpec::from_json(bad).is_err());
    let outside = r#"{"n": 1, "m": [2], "cells": [{"k": [3], "w": 1.0}]}"#;
    assert!(ErlangMixtureSpec::from_json(outside).is_err());
}
