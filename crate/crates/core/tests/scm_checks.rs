//! Sampling correctness: determinism, agreement with exact enumeration, and
//! closed-form cross-checks.

use pig_core::gaussian::LinearScmView;
use pig_core::graph::stable_blanket;
use pig_core::scm::sample::{sample, sample_training};
use pig_core::scm::{
    enumerate_discrete, make_perturbed_env, EnvironmentFamily, PerturbationPolicy,
};
use pig_core::{presets, stats};

#[test]
fn equal_seeds_give_bit_identical_datasets() {
    let (scm, family) = presets::fig2_linear_scm();
    let a = sample(&scm, &family, "obs", 500, 42).unwrap();
    let b = sample(&scm, &family, "obs", 500, 42).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.y, b.y);
    let mut csv_a = Vec::new();
    let mut csv_b = Vec::new();
    a.write_csv(&mut csv_a).unwrap();
    b.write_csv(&mut csv_b).unwrap();
    assert_eq!(csv_a, csv_b);

    let c = sample(&scm, &family, "obs", 500, 43).unwrap();
    assert_ne!(a.y, c.y);
}

#[test]
fn zero_rows_rejected() {
    let (scm, family) = presets::fig2_linear_scm();
    assert!(sample(&scm, &family, "obs", 0, 1).is_err());
}

#[test]
fn star_model_copy_rate_matches_flip_probability() {
    // With X2 forced to 1 the first covariate copies the response except
    // for a p-flip.
    let scm = presets::star_scm(0.25);
    let family = presets::star_family();
    let data = sample(&scm, &family, "q1", 100_000, 7).unwrap();
    let copy_rate = (0..data.n())
        .filter(|&i| data.x[(i, 0)] == data.y[i])
        .count() as f64
        / data.n() as f64;
    assert!((copy_rate - 0.75).abs() < 0.01, "copy rate {copy_rate}");
}

#[test]
fn monte_carlo_frequencies_match_enumeration() {
    let scm = presets::star_scm(0.3);
    let family = presets::star_family();
    let n = 100_000usize;
    for env in ["q0.5", "q1"] {
        let joint = enumerate_discrete(&scm, &family, env).unwrap();
        let data = sample(&scm, &family, env, n, 11).unwrap();
        // Count empirical frequencies per configuration.
        let mut counts = std::collections::BTreeMap::<(i64, i64, i64), usize>::new();
        for i in 0..data.n() {
            *counts
                .entry((
                    data.x[(i, 0)] as i64,
                    data.x[(i, 1)] as i64,
                    data.y[i] as i64,
                ))
                .or_insert(0) += 1;
        }
        let mut violations = 0;
        joint.for_each(|x, y, p| {
            let key = (x[0] as i64, x[1] as i64, y as i64);
            let freq = counts.get(&key).copied().unwrap_or(0) as f64 / n as f64;
            let tol = 3.0 * (p * (1.0 - p) / n as f64).sqrt().max(1e-9);
            if (freq - p).abs() > tol {
                violations += 1;
            }
        });
        assert!(violations <= 5, "{env}: {violations} configurations off");
    }
}

#[test]
fn sampled_variance_matches_closed_form() {
    let (scm, family) = presets::fig2_linear_scm();
    let view = LinearScmView::from_scm(&scm, &family).unwrap();
    let (_, cov) = view.joint_moments("obs").unwrap();
    let var_y_exact = cov[(view.d(), view.d())];

    let data = sample(&scm, &family, "obs", 200_000, 3).unwrap();
    let (_, sd) = stats::mean_sd(&data.y);
    let var_y_mc = sd * sd;
    assert!(
        (var_y_mc - var_y_exact).abs() / var_y_exact < 0.02,
        "mc {var_y_mc} vs exact {var_y_exact}"
    );
}

#[test]
fn derived_example_sampled_risk() {
    let (scm, family) = presets::strict_b2_scm();
    let data = sample(&scm, &family, "train", 200_000, 5).unwrap();
    let mut losses = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let f = (data.x[(i, 0)] - data.x[(i, 1)]) / 3.0;
        let e = data.y[i] - f;
        losses.push(e * e);
    }
    let (mean, _) = stats::mean_sd(&losses);
    assert!((mean - 2.0 / 3.0).abs() < 0.01, "risk = {mean}");
}

#[test]
fn constant_perturbation_shifts_the_response_mean() {
    let (scm, _) = presets::fig2_linear_scm();
    let b = 0.7;
    let env = make_perturbed_env(
        &scm,
        "shifted",
        &[PerturbationPolicy::constant("X1", b, b)],
    )
    .unwrap();
    let family = EnvironmentFamily::new(vec![env]).unwrap();
    let data = sample(&scm, &family, "shifted", 200_000, 9).unwrap();
    let (mean_y, _) = stats::mean_sd(&data.y);
    // The response loads on X1 with coefficient 1.
    assert!((mean_y - b).abs() < 0.02, "mean = {mean_y}");
}

#[test]
fn zero_policy_is_distributionally_identical() {
    let (scm, family) = presets::fig2_linear_scm();
    let env = make_perturbed_env(
        &scm,
        "null",
        &[
            PerturbationPolicy::constant("X1", 0.0, 0.0),
            PerturbationPolicy::net(
                "X4",
                vec![
                    pig_core::scm::PolicyInput::Node("Y".into()),
                    pig_core::scm::PolicyInput::OwnNoise,
                ],
                0.0,
                vec![4],
            ),
        ],
    )
    .unwrap();
    let fam2 = EnvironmentFamily::new(vec![env]).unwrap();
    let base = sample(&scm, &family, "obs", 50_000, 13).unwrap();
    let perturbed = sample(&scm, &fam2, "null", 50_000, 13).unwrap();
    for col in 0..base.d() {
        let (mb, sb) = stats::mean_sd(&(0..base.n()).map(|i| base.x[(i, col)]).collect::<Vec<_>>());
        let (mp, sp) = stats::mean_sd(
            &(0..perturbed.n())
                .map(|i| perturbed.x[(i, col)])
                .collect::<Vec<_>>(),
        );
        assert!((mb - mp).abs() < 0.03, "col {col} means {mb} vs {mp}");
        assert!((sb - sp).abs() < 0.03, "col {col} sds {sb} vs {sp}");
    }
}

#[test]
fn invariant_conditional_is_environment_free() {
    // Generator self-check: the conditional law of Y given the stable
    // blanket is the same across environments. In the linear model the
    // conditional mean is affine and the conditional variance constant, so
    // comparing the per-environment population regressions suffices.
    let (scm, _) = presets::fig2_linear_scm();
    let dag = scm.dag().clone();
    let family = presets::fig2_learning_family(&scm);
    let view = LinearScmView::from_scm(&scm, &family).unwrap();
    let sb = stable_blanket(&dag);
    let mut reference: Option<(Vec<f64>, f64)> = None;
    for env in ["e0", "e1", "e2"] {
        let f = view.population_regression(env, &sb, &dag).unwrap();
        let risk = view.population_risk(env, &f).unwrap();
        match &reference {
            None => reference = Some((f.weights.clone(), risk)),
            Some((w, r)) => {
                for (a, b) in w.iter().zip(&f.weights) {
                    assert!((a - b).abs() < 1e-9, "{env}: {a} vs {b}");
                }
                assert!((risk - r).abs() < 1e-9, "{env}: {risk} vs {r}");
            }
        }
    }
}

#[test]
fn pooled_training_sample_stacks_environments() {
    let (scm, _) = presets::fig2_linear_scm();
    let family = presets::fig2_learning_family(&scm);
    let data = sample_training(&scm, &family, 300, 17).unwrap();
    assert_eq!(data.n(), 900);
    assert_eq!(data.env_counts(), vec![300, 300, 300]);
}
