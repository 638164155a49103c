fn main() {
    use pig_core::game::*;
    use pig_core::predictors::{fit_mlp, Loss, MlpConfig, Predict};
    use pig_core::rng;
    use pig_core::scm::sample::sample_training;
    use pig_core::scm::{PolicyInput::*, Task};
    use nalgebra::DMatrix;
    use rayon::prelude::*;

    let (scm, family) = pig_core::presets::fig2_nonlinear_scm();
    let specs = vec![
        PolicySpec::net("X1", vec![Node("X2".into()), OwnNoise], vec![8]),
        PolicySpec::net("X4", vec![Node("Y".into()), Node("X2".into()), OwnNoise], vec![8]),
    ];
    let es = EsConfig { population: 10, iterations: 60, restarts: 2, batch: 320, heldout: 3000, eval: 30000, sigma0: 0.5 };

    struct Ens(Vec<pig_core::predictors::MlpModel>, Vec<usize>);
    impl Predict for Ens {
        fn predict_row(&self, x: &[f64]) -> f64 {
            let sub: Vec<f64> = self.1.iter().map(|&c| x[c]).collect();
            self.0.iter().map(|m| m.predict(&sub)).sum::<f64>() / self.0.len() as f64
        }
    }

    let rows: Vec<(u64, f64, f64, f64, bool)> = (0..6u64).into_par_iter().map(|rep| {
        let data = sample_training(&scm, &family, 4000, rng::derive(100, &[rep])).unwrap();
        let cfg = MlpConfig { max_steps: 2500, ..Default::default() };
        let build = |cols: Vec<usize>, seed0: u64| {
            let x = DMatrix::from_fn(data.n(), cols.len(), |i, j| data.x[(i, cols[j])]);
            let nets = (0..3).map(|k| fit_mlp(&x, &data.y, Task::Regression, &cfg, seed0 + 7 * k)).collect();
            Ens(nets, cols)
        };
        let sb = build(vec![0, 1, 2], rep);
        let pa = build(vec![0, 1], rep + 50);
        let all = build((0..5).collect(), rep + 100);
        let run = |f: &dyn Predict, seed| {
            let (_, o) = follower_perturbation_response(&scm, &GamePredictor::General(f), "x", &specs,
                &FollowerObjective::LeaderRisk { loss: Loss::Squared }, Loss::Squared, 1.0, &es, seed).unwrap();
            o.leader_risk
        };
        let (s, p, a) = (run(&sb, rep + 1000), run(&pa, rep + 2000), run(&all, rep + 3000));
        (rep, s, p, a, s <= p && p <= a)
    }).collect();
    let mut ok = 0;
    for (rep, s, p, a, good) in &rows {
        ok += *good as u32;
        println!("rep {rep}: sb={s:.4} pa={p:.4} all={a:.4} ordering={good}");
    }
    println!("ensemble-of-3 ordering held in {ok}/6");
}
