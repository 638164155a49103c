fn main() {
    use pig_core::learn::*;
    use pig_core::invariance::TestKind;
    use pig_core::scm::Task;
    use pig_core::scm::sample::sample_training;
    let (scm, _) = pig_core::presets::fig2_linear_scm();
    let family = pig_core::presets::fig2_learning_family(&scm);
    let data = sample_training(&scm, &family, 400, 6).unwrap();
    let mut config = SubsetSearchConfig::new(Task::Regression, TestKind::Gcm, 9);
    config.bootstrap = 25;
    let candidates = vec![vec![0, 1], vec![0, 1, 2], vec![3]];
    let result = stabilized(&data, &candidates, &config).unwrap();
    for r in &result.rows {
        println!("{:?} s_inv={:.4} s_pred={:?} inv={} pred={} w={}", r.subset, r.s_inv, r.s_pred, r.passed_inv, r.passed_pred, r.weight);
    }
    println!("cutoff={} fallback={}", result.cutoff, result.fallback);
}
