fn main() {
    use pig_core::scm::sample::sample_training;
    let (scm, _) = pig_core::presets::fig2_linear_scm();
    let family = pig_core::presets::fig2_learning_family(&scm);
    let data = sample_training(&scm, &family, 1500, 99).unwrap();
    let f = std::fs::File::create("/tmp/fig2_data.csv").unwrap();
    data.write_csv(std::io::BufWriter::new(f)).unwrap();
    println!("wrote /tmp/fig2_data.csv ({} rows)", data.n());
}
