//! Population-regression properties on linear-Gaussian views.

use nalgebra::DVector;
use pig_core::gaussian::{counterexample_construct, AffinePredictor, LinearScmView};
use pig_core::graph::{forbidden_descendants, stable_blanket, NodeSet};
use pig_core::{presets, random, rng};
use rand::RngExt;

fn benchmark_view() -> (LinearScmView, pig_core::graph::Dag) {
    let (scm, _) = presets::fig2_linear_scm();
    let dag = scm.dag().clone();
    let family = presets::fig2_learning_family(&scm);
    (LinearScmView::from_scm(&scm, &family).unwrap(), dag)
}

#[test]
fn residuals_are_orthogonal_to_the_design() {
    let (view, dag) = benchmark_view();
    let sb = stable_blanket(&dag);
    let f = view.population_regression("e0", &sb, &dag).unwrap();
    let (mean, cov) = view.joint_moments("e0").unwrap();
    let d = view.d();
    let w = f.dense_weights(d);
    // Cov(Y - f(X), X_j) = cov[y, j] - sum_k w_k cov[k, j] for j in S.
    for &col in &f.cols {
        let mut c = cov[(d, col)];
        for k in 0..d {
            c -= w[k] * cov[(k, col)];
        }
        assert!(c.abs() < 1e-9, "col {col}: residual covariance {c}");
    }
    let _ = mean;
}

#[test]
fn invariant_subset_weights_match_across_environments() {
    let (view, dag) = benchmark_view();
    for s in [
        stable_blanket(&dag),
        NodeSet::from_labels(&dag, &["X1", "X2"]).unwrap(),
    ] {
        let reference = view.population_regression("e0", &s, &dag).unwrap();
        for env in ["e1", "e2"] {
            let other = view.population_regression(env, &s, &dag).unwrap();
            for (a, b) in reference.weights.iter().zip(&other.weights) {
                assert!((a - b).abs() < 1e-9);
            }
            assert!((reference.intercept - other.intercept).abs() < 1e-9);
        }
    }
}

#[test]
fn population_regression_beats_random_perturbations() {
    let (view, dag) = benchmark_view();
    let sb = stable_blanket(&dag);
    let best = view.population_regression("e0", &sb, &dag).unwrap();
    let base_risk = view.population_risk("e0", &best).unwrap();
    let mut r = rng::stream(3, &[0]);
    for _ in 0..100 {
        let mut perturbed = best.clone();
        for w in perturbed.weights.iter_mut() {
            *w += 0.2 * (r.random::<f64>() - 0.5);
        }
        perturbed.intercept += 0.2 * (r.random::<f64>() - 0.5);
        let risk = view.population_risk("e0", &perturbed).unwrap();
        assert!(risk >= base_risk - 1e-12);
    }
}

#[test]
fn larger_subsets_never_hurt_within_an_environment() {
    let (view, _) = benchmark_view();
    let mut r = rng::stream(4, &[1]);
    let d = view.d();
    for _ in 0..50 {
        // Random nested pair of column sets.
        let mut small: Vec<usize> = (0..d).filter(|_| r.random::<f64>() < 0.4).collect();
        let mut large = small.clone();
        for c in 0..d {
            if !large.contains(&c) && r.random::<f64>() < 0.5 {
                large.push(c);
            }
        }
        small.sort_unstable();
        large.sort_unstable();
        let f_small = view.population_regression_cols("e0", &small).unwrap();
        let f_large = view.population_regression_cols("e0", &large).unwrap();
        let r_small = view.population_risk("e0", &f_small).unwrap();
        let r_large = view.population_risk("e0", &f_large).unwrap();
        assert!(r_large <= r_small + 1e-9, "{small:?} vs {large:?}");
    }
}

#[test]
fn stable_blanket_is_a_floor_over_forbidden_free_predictors() {
    // The linear rendering of the risk-floor property: any affine predictor
    // supported outside the forbidden set is at least as risky as the
    // stable-blanket regression, in every environment.
    let (view, dag) = benchmark_view();
    let sb = stable_blanket(&dag);
    let f_sb = view.population_regression("e0", &sb, &dag).unwrap();
    let (_, forb) = forbidden_descendants(&dag);
    let allowed: Vec<usize> = dag
        .covariates()
        .iter()
        .enumerate()
        .filter(|(_, &id)| !forb.contains(id))
        .map(|(col, _)| col)
        .collect();
    let mut r = rng::stream(5, &[2]);
    for env in view.env_labels() {
        let sb_risk = view.population_risk(env, &f_sb).unwrap();
        for _ in 0..40 {
            let cols: Vec<usize> = allowed
                .iter()
                .copied()
                .filter(|_| r.random::<f64>() < 0.7)
                .collect();
            let weights: Vec<f64> = cols.iter().map(|_| 2.0 * r.random::<f64>() - 1.0).collect();
            let f = AffinePredictor::new(cols, weights, r.random::<f64>() - 0.5);
            let risk = view.population_risk(env, &f).unwrap();
            assert!(
                risk >= sb_risk - 1e-9,
                "{env}: {risk} < {sb_risk} for {f:?}"
            );
        }
    }
}

#[test]
fn worst_case_sweep_on_star_satisfying_models() {
    // Strong-intervention families on star-condition graphs: the stable
    // blanket regression is worst-case optimal against random affine
    // predictors.
    let mut r = rng::stream(6, &[3]);
    let mut done = 0;
    while done < 20 {
        let Some((dag, view)) = random::random_linear_star_instance(&mut r, 5) else {
            continue;
        };
        let sb = stable_blanket(&dag);
        let f_sb = view.population_regression("obs", &sb, &dag).unwrap();
        let worst_sb = view
            .env_labels()
            .iter()
            .map(|e| view.population_risk(e, &f_sb).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let d = view.d();
        for _ in 0..100 {
            let cols: Vec<usize> = (0..d).collect();
            let weights: Vec<f64> = (0..d).map(|_| 2.0 * r.random::<f64>() - 1.0).collect();
            let f = AffinePredictor::new(cols, weights, r.random::<f64>() - 0.5);
            let worst_f = view
                .env_labels()
                .iter()
                .map(|e| view.population_risk(e, &f).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(
                worst_sb <= worst_f + 1e-9,
                "sb {worst_sb} vs random {worst_f}"
            );
        }
        done += 1;
    }
}

#[test]
fn counterexamples_hold_on_random_star_violations() {
    let mut r = rng::stream(7, &[4]);
    let mut done = 0;
    let mut attempts = 0;
    while done < 20 && attempts < 2000 {
        attempts += 1;
        let dag = random::random_dag(&mut r, 6, 0.35, 2);
        if pig_core::graph::check_star_condition(&dag) {
            continue;
        }
        let seed = r.random::<u64>();
        let result = counterexample_construct(&dag, seed).unwrap();
        assert!(result.passed, "attempt {attempts}: {:?}", result.rows);
        assert!(result.min_gap > 0.0);
        done += 1;
    }
    assert_eq!(done, 20, "only {done} star violations found");
}

#[test]
fn mixture_moments_average_the_environments() {
    let (view, _) = benchmark_view();
    let weights: Vec<(String, f64)> = view
        .env_labels()
        .iter()
        .map(|l| (l.to_string(), 1.0))
        .collect();
    let (mean, cov) = view.mixture_moments(&weights).unwrap();
    let mut expected = DVector::zeros(view.d() + 1);
    for label in view.env_labels() {
        expected += view.joint_moments(label).unwrap().0 / 3.0;
    }
    assert!((mean - expected).amax() < 1e-12);
    // Mixture covariance majorizes the average within-environment covariance.
    let mut avg_cov = nalgebra::DMatrix::zeros(view.d() + 1, view.d() + 1);
    for label in view.env_labels() {
        avg_cov += view.joint_moments(label).unwrap().1 / 3.0;
    }
    for i in 0..view.d() + 1 {
        assert!(cov[(i, i)] >= avg_cov[(i, i)] - 1e-12);
    }
}
