//! The executable theory checks on known models and random sweeps.

use pig_core::game::oracles::{
    blanket_vs_parents, individual_population_equivalence, stable_blanket_floor, UtilityCase,
};
use pig_core::predictors::Loss;
use pig_core::scm::enumerate_discrete;
use pig_core::{presets, random, rng};
use rand::RngExt;

#[test]
fn floor_holds_on_the_star_model() {
    let scm = presets::star_scm(0.25);
    let family = presets::star_family();
    let report = stable_blanket_floor(&scm, &family, Loss::Brier).unwrap();
    assert!(report.passed, "{report:?}");
    // The stable blanket is empty, so its risk is 1/4 in every environment.
    for case in &report.cases {
        assert!(case.detail.contains("risk_sb=0.2500000000"), "{case:?}");
    }
}

#[test]
fn floor_holds_on_random_binary_models() {
    let mut r = rng::stream(41, &[0]);
    let mut done = 0;
    while done < 25 {
        let dag = random::random_dag(&mut r, 4, 0.4, 2);
        let (scm, family) = random::random_discrete_scm(&mut r, &dag, 3);
        let report = stable_blanket_floor(&scm, &family, Loss::Brier).unwrap();
        assert!(report.passed, "{report:?}");
        done += 1;
    }
}

#[test]
fn blanket_vs_parents_on_star_model_is_equality() {
    // Parents and stable blanket are both empty here, so the two sides agree.
    let scm = presets::star_scm(0.25);
    let family = presets::star_family();
    let report = blanket_vs_parents(&scm, &family, Loss::Brier, &UtilityCase::LeaderRisk).unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn blanket_vs_parents_on_random_models_both_cases() {
    let mut r = rng::stream(42, &[1]);
    let mut done = 0;
    while done < 20 {
        let dag = random::random_dag(&mut r, 4, 0.4, 2);
        let (scm, family) = random::random_discrete_scm(&mut r, &dag, 3);
        let adversarial =
            blanket_vs_parents(&scm, &family, Loss::Brier, &UtilityCase::LeaderRisk).unwrap();
        assert!(adversarial.passed, "{adversarial:?}");

        for trial in 0..3 {
            let alpha = r.random::<f64>() - 0.5;
            let beta = 2.0 * r.random::<f64>() - 1.0;
            let coefs: Vec<Vec<f64>> = (0..family.len())
                .map(|_| (0..dag.covariates().len()).map(|_| r.random::<f64>() - 0.5).collect())
                .collect();
            let costs: Vec<Box<dyn Fn(&[f64]) -> f64>> = coefs
                .iter()
                .map(|c| {
                    let c = c.clone();
                    Box::new(move |x: &[f64]| {
                        c.iter().zip(x).map(|(ci, xi)| ci * xi).sum::<f64>()
                    }) as Box<dyn Fn(&[f64]) -> f64>
                })
                .collect();
            let cost_refs: Vec<&dyn Fn(&[f64]) -> f64> =
                costs.iter().map(|b| b.as_ref()).collect();
            let case = UtilityCase::AffineMinusCost {
                alpha,
                beta,
                costs: cost_refs,
            };
            let report = blanket_vs_parents(&scm, &family, Loss::Brier, &case).unwrap();
            assert!(report.passed, "trial {trial}: {report:?}");
        }
        done += 1;
    }
}

#[test]
fn beta_zero_makes_best_responses_predictor_free() {
    // With beta = 0 the utility ignores the predictor entirely, so both
    // predictors face the same environment set and the comparison reduces to
    // a fixed-environment inequality.
    let scm = presets::star_scm(0.3);
    let family = presets::star_family();
    let costs: Vec<Box<dyn Fn(&[f64]) -> f64>> = (0..family.len())
        .map(|i| {
            let scale = i as f64;
            Box::new(move |x: &[f64]| scale * x[0]) as Box<dyn Fn(&[f64]) -> f64>
        })
        .collect();
    let cost_refs: Vec<&dyn Fn(&[f64]) -> f64> = costs.iter().map(|b| b.as_ref()).collect();
    let case = UtilityCase::AffineMinusCost {
        alpha: 0.7,
        beta: 0.0,
        costs: cost_refs,
    };
    let report = blanket_vs_parents(&scm, &family, Loss::Brier, &case).unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn individual_equivalence_on_random_models() {
    let mut r = rng::stream(43, &[2]);
    let mut done = 0;
    let mut attempts = 0;
    while done < 12 && attempts < 600 {
        attempts += 1;
        let Some((scm, observed)) = random::random_individuals_instance(&mut r, 3) else {
            continue;
        };
        // Kernel: quadratic gain in the response against a fixed probe.
        let probe: Vec<f64> = (0..scm.dag().covariates().len())
            .map(|_| r.random::<f64>())
            .collect();
        let kernel = move |x: &[f64], y: f64| -> f64 {
            let s: f64 = probe.iter().zip(x).map(|(p, v)| p * v).sum();
            -(y - s) * (y - s)
        };
        match individual_population_equivalence(&scm, &observed, &kernel) {
            Ok(report) => {
                assert!(report.passed, "{report:?}");
                done += 1;
            }
            Err(pig_core::Error::Resource(_)) => continue,
            Err(e) => panic!("unexpected error: {e}"),
        }
    }
    assert!(done >= 12, "only {done} instances in {attempts} attempts");
}

#[test]
fn individual_equivalence_with_empty_observation() {
    let mut r = rng::stream(44, &[3]);
    loop {
        let dag = random::random_dag(&mut r, 3, 0.35, 1);
        if dag.children_of(dag.env()).is_empty() {
            continue;
        }
        let (scm, _) = random::random_discrete_scm(&mut r, &dag, 1);
        // All intervened parents must be intervened or observed; with O
        // empty this needs parentless targets.
        let ok = dag
            .children_of(dag.env())
            .iter()
            .all(|&j| dag.parents_of(j).iter().all(|&p| p == dag.env()));
        if !ok {
            continue;
        }
        let kernel = |x: &[f64], y: f64| -(y - x[0]) * (y - x[0]);
        let report = individual_population_equivalence(&scm, &[], &kernel).unwrap();
        assert!(report.passed, "{report:?}");
        break;
    }
}

#[test]
fn exact_accuracies_on_the_representation_model() {
    let (scm, family) = presets::irm_b1_scm();
    // Predict Y from X2 directly.
    let copy_rule = |x: &[f64]| x[1];
    // Threshold on X1.
    let threshold_rule = |x: &[f64]| x[0];
    for (env, copy_expected) in [("e1", 0.9), ("e2", 0.8), ("e3", 0.7), ("e8", 0.2)] {
        let joint = enumerate_discrete(&scm, &family, env).unwrap();
        let copy_acc = joint.accuracy(copy_rule);
        let thr_acc = joint.accuracy(threshold_rule);
        assert!(
            (copy_acc - copy_expected).abs() < 1e-12,
            "{env}: copy accuracy {copy_acc}"
        );
        assert!((thr_acc - 0.75).abs() < 1e-12, "{env}: threshold accuracy {thr_acc}");
    }
}
