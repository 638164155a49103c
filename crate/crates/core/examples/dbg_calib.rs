fn main() {
    use pig_core::invariance::*;
    use pig_core::predictors::LearnerConfig;
    use pig_core::scm::Task;
    use pig_core::scm::sample::sample_training;
    use rayon::prelude::*;

    let (scm, _) = pig_core::presets::fig2_linear_scm();
    let learning = pig_core::presets::fig2_learning_family(&scm);
    let reg = LearnerConfig::default_for(Task::Regression);
    let reps = 200u64;
    let x4 = 3usize; // column of X4
    let rates: Vec<(u32, u32)> = (0..reps).into_par_iter().map(|rep| {
        let data = sample_training(&scm, &learning, 2000, 15_000 + rep).unwrap();
        let g = test_gcm(&data, &[x4], &reg, rep).unwrap();
        let i = test_ird(&data, &[x4], &reg, rep).unwrap();
        ((g.p_value < 0.05) as u32, (i.p_value < 0.05) as u32)
    }).collect();
    let g: u32 = rates.iter().map(|r| r.0).sum();
    let i: u32 = rates.iter().map(|r| r.1).sum();
    println!("power S={{X4}} n=2000: gcm={:.3} ird={:.3}", g as f64 / reps as f64, i as f64 / reps as f64);
}
