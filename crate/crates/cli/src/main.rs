//! `pig` — prediction-intervention games on structural causal models.

use std::io::BufReader;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pig_cli::error::{CliError, CliResult};
use pig_cli::{registry, runner, scenario};
use pig_core::game::oracles;
use pig_core::graph::{self, DagSpec, NodeSet};
use pig_core::invariance::{self, TestKind};
use pig_core::learn;
use pig_core::predictors::{LearnerConfig, Loss};
use pig_core::scm::{Dataset, Task};

#[derive(Parser)]
#[command(
    name = "pig",
    about = "Prediction-intervention games: stable blankets, invariance tests, and follower best responses",
    version
)]
struct Cli {
    /// Worker threads (default: PIG_WORKERS or all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Graph quantities of a DAG file.
    Graph {
        #[command(subcommand)]
        op: GraphOp,
    },
    /// Run a scenario (a file path or a built-in name).
    Run(RunArgs),
    /// Test invariance of a covariate subset on a dataset.
    TestInvariance(TestArgs),
    /// Learn subset predictors from a dataset.
    Learn(LearnArgs),
    /// Executable theory checks.
    Oracle(OracleArgs),
    /// List built-in scenarios.
    Scenarios,
}

#[derive(Subcommand)]
enum GraphOp {
    /// Stable blanket of the response.
    Sb(GraphFileArgs),
    /// Markov blanket of the response.
    Mb(GraphFileArgs),
    /// Intervened children and forbidden descendants.
    Forb(GraphFileArgs),
    /// Check the star condition.
    Star(GraphFileArgs),
    /// d-separation of two nodes given a conditioning set.
    Dsep(DsepArgs),
}

#[derive(Args)]
struct GraphFileArgs {
    /// DAG JSON file.
    dag: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DsepArgs {
    dag: PathBuf,
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    /// Comma-separated conditioning set.
    #[arg(long, default_value = "")]
    given: String,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file path or built-in name.
    scenario: String,
    #[arg(long)]
    reps: Option<usize>,
    /// Bound grid `lo:hi:step`.
    #[arg(long, value_name = "LO:HI:STEP")]
    b_grid: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Training-size sweep, comma separated.
    #[arg(long)]
    train_sizes: Option<String>,
    /// Scenario parameter overrides, `name=value`, repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Shorthand for `--param p=<VALUE>`.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct TestArgs {
    /// Dataset CSV (`x_<label>,...,y,env`).
    data: PathBuf,
    /// Comma-separated subset of covariate labels (empty for the empty set).
    #[arg(long, default_value = "")]
    subset: String,
    #[arg(long, value_enum, default_value = "gcm")]
    test: TestName,
    #[arg(long, value_enum, default_value = "regression")]
    task: TaskName,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestName {
    Ird,
    Gcm,
    Itp,
    Iep,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskName {
    Regression,
    Classification,
}

#[derive(Args)]
struct LearnArgs {
    /// `imp` or `sc`.
    method: String,
    data: PathBuf,
    #[arg(long, value_enum, default_value = "regression")]
    task: TaskName,
    #[arg(long, value_enum, default_value = "gcm")]
    test: TestName,
    #[arg(long, default_value_t = 0.05)]
    alpha_inv: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha_pred: f64,
    #[arg(long, default_value_t = 250)]
    bootstrap: usize,
    /// Screening spec: `none` or `l1:<k>`.
    #[arg(long, default_value = "none")]
    screen: String,
    #[arg(long)]
    max_subset_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct OracleArgs {
    /// `lemma1`, `thm2`, `thm4`, `individuals`, or `counterexample`.
    which: String,
    /// Scenario or DAG file, where applicable.
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random-instance sweep size (lemma1/thm2/individuals).
    #[arg(long)]
    sweep: Option<usize>,
    #[arg(long, default_value_t = 20)]
    scms: usize,
    #[arg(long, default_value_t = 100)]
    predictors: usize,
    /// Observed nodes for the individuals oracle, comma separated.
    #[arg(long)]
    observed: Option<String>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let workers = cli
        .workers
        .or_else(|| std::env::var("PIG_WORKERS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = workers {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn emit(out: &Option<PathBuf>, content: &str) -> CliResult<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, content)?;
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn load_dag(path: &PathBuf) -> CliResult<(pig_core::graph::Dag, graph::AugmentationSpec)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Other(format!("cannot read `{}`: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Syntax(e.to_string()))?;
    let spec: DagSpec =
        serde_json::from_value(value).map_err(|e| CliError::Schema(e.to_string()))?;
    spec.build().map_err(CliError::from)
}

fn parse_b_grid(text: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Schema(format!("bad b-grid `{text}`; use lo:hi:step")));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| CliError::Schema("bad b-grid lower bound".into()))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| CliError::Schema("bad b-grid upper bound".into()))?;
    let step: f64 = parts[2]
        .parse()
        .map_err(|_| CliError::Schema("bad b-grid step".into()))?;
    if step <= 0.0 || hi < lo {
        return Err(CliError::Schema("b-grid needs step > 0 and hi >= lo".into()));
    }
    let mut grid = Vec::new();
    let mut v = lo;
    while v <= hi + 1e-9 {
        grid.push((v * 1e9).round() / 1e9);
        v += step;
    }
    Ok(grid)
}

fn read_dataset(path: &PathBuf, task: TaskName) -> CliResult<Dataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Other(format!("cannot open `{}`: {e}", path.display())))?;
    let task = match task {
        TaskName::Regression => Task::Regression,
        TaskName::Classification => Task::Classification,
    };
    Dataset::read_csv(BufReader::new(file), task).map_err(CliError::from)
}

fn split_labels(text: &str) -> Vec<String> {
    text.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Scenarios => {
            for name in registry::names() {
                println!("{name}");
            }
            Ok(())
        }
        Command::Graph { op } => run_graph(op),
        Command::Run(args) => run_run(args),
        Command::TestInvariance(args) => run_test(args),
        Command::Learn(args) => run_learn(args),
        Command::Oracle(args) => run_oracle(args),
    }
}

fn node_set_output(
    labels: Vec<String>,
    format: Format,
    header: &str,
    out: &Option<PathBuf>,
) -> CliResult<()> {
    let content = match format {
        Format::Csv => format!("{}\n", labels.join(",")),
        Format::Json => format!(
            "{}\n",
            serde_json::json!({ header: labels })
        ),
    };
    emit(out, &content)
}

fn run_graph(op: GraphOp) -> CliResult<()> {
    match op {
        GraphOp::Sb(args) => {
            let (dag, _) = load_dag(&args.dag)?;
            let set = graph::stable_blanket(&dag);
            node_set_output(set.to_labels(&dag), args.format, "stable_blanket", &args.out)
        }
        GraphOp::Mb(args) => {
            let (dag, _) = load_dag(&args.dag)?;
            let set = graph::markov_blanket(&dag);
            node_set_output(set.to_labels(&dag), args.format, "markov_blanket", &args.out)
        }
        GraphOp::Forb(args) => {
            let (dag, _) = load_dag(&args.dag)?;
            let (ch_int, forb) = graph::forbidden_descendants(&dag);
            let content = match args.format {
                Format::Csv => format!(
                    "ch_int,{}\nforb,{}\n",
                    ch_int.to_labels(&dag).join("|"),
                    forb.to_labels(&dag).join("|")
                ),
                Format::Json => format!(
                    "{}\n",
                    serde_json::json!({
                        "ch_int": ch_int.to_labels(&dag),
                        "forb": forb.to_labels(&dag),
                    })
                ),
            };
            emit(&args.out, &content)
        }
        GraphOp::Star(args) => {
            let (dag, _) = load_dag(&args.dag)?;
            let holds = graph::check_star_condition(&dag);
            let content = match args.format {
                Format::Csv => format!("{holds}\n"),
                Format::Json => format!("{}\n", serde_json::json!({ "star": holds })),
            };
            emit(&args.out, &content)
        }
        GraphOp::Dsep(args) => {
            let (dag, _) = load_dag(&args.dag)?;
            let given = NodeSet::from_labels(&dag, &split_labels(&args.given))
                .map_err(CliError::from)?;
            let separated =
                graph::d_separated(&dag, &args.a, &args.b, &given).map_err(CliError::from)?;
            let content = match args.format {
                Format::Csv => format!("{separated}\n"),
                Format::Json => format!("{}\n", serde_json::json!({ "d_separated": separated })),
            };
            emit(&args.out, &content)
        }
    }
}

fn run_run(args: RunArgs) -> CliResult<()> {
    let mut params = Vec::new();
    for p in &args.params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| CliError::Schema(format!("bad --param `{p}`; use name=value")))?;
        let value: f64 = v
            .parse()
            .map_err(|_| CliError::Schema(format!("bad --param value in `{p}`")))?;
        params.push((k.to_string(), value));
    }
    if let Some(p) = args.p {
        params.push(("p".to_string(), p));
    }
    let overrides = runner::RunOverrides {
        reps: args.reps,
        b_grid: args.b_grid.as_deref().map(parse_b_grid).transpose()?,
        seed: args.seed,
        train_sizes: args
            .train_sizes
            .as_deref()
            .map(|t| {
                t.split(',')
                    .map(|s| {
                        s.trim().parse::<usize>().map_err(|_| {
                            CliError::Schema(format!("bad train size `{s}`"))
                        })
                    })
                    .collect::<CliResult<Vec<_>>>()
            })
            .transpose()?,
    };
    let summary = runner::run_to_dir(&args.scenario, &overrides, &params, &args.out)?;
    eprintln!(
        "wrote {} file(s); {} row(s), {} error(s)",
        summary.files.len(),
        summary.rows.len(),
        summary.errors.len()
    );
    for f in &summary.files {
        eprintln!("  {}", f.display());
    }
    Ok(())
}

fn run_test(args: TestArgs) -> CliResult<()> {
    let data = read_dataset(&args.data, args.task)?;
    let cols: Vec<usize> = split_labels(&args.subset)
        .iter()
        .map(|l| data.col_index(l).map_err(CliError::from))
        .collect::<CliResult<_>>()?;
    let kind = match args.test {
        TestName::Ird => TestKind::Ird,
        TestName::Gcm => TestKind::Gcm,
        TestName::Itp => TestKind::Itp,
        TestName::Iep => TestKind::Iep,
    };
    let learner = LearnerConfig::default_for(data.task);
    let report =
        invariance::run_test(kind, &data, &cols, &learner, args.seed).map_err(CliError::from)?;
    let content = match args.format {
        Format::Csv => format!(
            "subset,test,statistic,dof,p\n{},{},{},{},{}\n",
            report.subset.join(";"),
            report.test,
            report.statistic,
            report.dof,
            report.p_value
        ),
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&report).unwrap()),
    };
    emit(&args.out, &content)
}

fn run_learn(args: LearnArgs) -> CliResult<()> {
    let data = read_dataset(&args.data, args.task)?;
    let kind = match args.test {
        TestName::Ird => TestKind::Ird,
        TestName::Gcm => TestKind::Gcm,
        TestName::Itp => TestKind::Itp,
        TestName::Iep => TestKind::Iep,
    };
    let mut config = learn::SubsetSearchConfig::new(data.task, kind, args.seed);
    config.alpha_inv = args.alpha_inv;
    config.alpha_pred = args.alpha_pred;
    config.bootstrap = args.bootstrap;
    config.max_subset_size = args.max_subset_size;
    config.screening = scenario::parse_screening(&args.screen)?;
    let (cols, _) = learn::screen(&data, &config).map_err(CliError::from)?;
    let candidates =
        learn::enumerate_subsets(&cols, config.max_subset_size).map_err(CliError::from)?;
    let rows = match args.method.as_str() {
        "imp" => {
            let result = learn::imp(&data, &candidates, &config).map_err(CliError::from)?;
            eprintln!(
                "selected: [{}]{}",
                result
                    .selected
                    .iter()
                    .map(|&c| data.columns[c].clone())
                    .collect::<Vec<_>>()
                    .join(","),
                if result.fallback { " (fallback)" } else { "" }
            );
            result.rows
        }
        "sc" => {
            let result = learn::stabilized(&data, &candidates, &config).map_err(CliError::from)?;
            eprintln!(
                "ensemble of {} member(s){}",
                result.ensemble.members().len(),
                if result.fallback { " (fallback)" } else { "" }
            );
            result.rows
        }
        other => {
            return Err(CliError::Schema(format!(
                "unknown learn method `{other}`; use imp or sc"
            )))
        }
    };
    let mut content = String::from("subset,s_inv,s_pred,passed_inv,passed_pred,weight\n");
    for r in &rows {
        content.push_str(&format!(
            "{},{:?},{},{},{},{:?}\n",
            r.subset.join(";"),
            r.s_inv,
            r.s_pred.map(|v| format!("{v:?}")).unwrap_or_default(),
            r.passed_inv,
            r.passed_pred,
            r.weight
        ));
    }
    emit(&args.out, &content)
}

fn oracle_report_text(report: &oracles::OracleReport, format: Format) -> String {
    match format {
        Format::Csv => {
            let mut s = String::from("case,passed,detail\n");
            for c in &report.cases {
                s.push_str(&format!("{},{},\"{}\"\n", c.label, c.passed, c.detail));
            }
            s.push_str(&format!("overall,{},\n", report.passed));
            s
        }
        Format::Json => {
            let cases: Vec<serde_json::Value> = report
                .cases
                .iter()
                .map(|c| {
                    serde_json::json!({"case": c.label, "passed": c.passed, "detail": c.detail})
                })
                .collect();
            format!(
                "{}\n",
                serde_json::json!({"name": report.name, "passed": report.passed, "cases": cases})
            )
        }
    }
}

fn run_oracle(args: OracleArgs) -> CliResult<()> {
    match args.which.as_str() {
        "lemma1" | "thm2" | "individuals" => {
            let reports = oracle_scenario_reports(&args)?;
            let mut all = String::new();
            let mut passed = true;
            for r in &reports {
                all.push_str(&oracle_report_text(r, args.format));
                passed &= r.passed;
            }
            emit(&args.out, &all)?;
            if !passed {
                return Err(CliError::Other("oracle check failed".into()));
            }
            Ok(())
        }
        "thm4" => {
            let rows = runner::worst_case_sweep(args.scms, args.predictors, args.seed)?;
            let mut content = String::from("instance,worst_case_sb,min_margin,passed\n");
            let mut passed = true;
            for (i, sb, margin, ok) in &rows {
                content.push_str(&format!("{i},{sb},{margin},{ok}\n"));
                passed &= ok;
            }
            emit(&args.out, &content)?;
            if !passed {
                return Err(CliError::Other("worst-case sweep failed".into()));
            }
            Ok(())
        }
        "counterexample" => {
            let input = args
                .input
                .as_ref()
                .ok_or_else(|| CliError::Schema("counterexample needs a DAG file".into()))?;
            let (dag, _) = load_dag(input)?;
            let result =
                pig_core::gaussian::counterexample_construct(&dag, args.seed).map_err(CliError::from)?;
            let mut content = String::from("env,risk_alternative,risk_stable_blanket\n");
            for row in &result.rows {
                content.push_str(&format!(
                    "{},{},{}\n",
                    row.env, row.risk_alternative, row.risk_stable_blanket
                ));
            }
            content.push_str(&format!("certificate,{},min_gap={}\n", result.passed, result.min_gap));
            emit(&args.out, &content)?;
            if !result.passed {
                return Err(CliError::Other("certificate failed".into()));
            }
            Ok(())
        }
        other => Err(CliError::Schema(format!("unknown oracle `{other}`"))),
    }
}

fn oracle_scenario_reports(args: &OracleArgs) -> CliResult<Vec<oracles::OracleReport>> {
    use pig_core::rng;
    let mut reports = Vec::new();
    if let Some(n) = args.sweep {
        // Random-instance sweep.
        let mut r = rng::stream(args.seed, &[0x0a]);
        let mut done = 0;
        while done < n {
            match args.which.as_str() {
                "individuals" => {
                    let Some((scm, observed)) =
                        pig_core::random::random_individuals_instance(&mut r, 3)
                    else {
                        continue;
                    };
                    let kernel = |x: &[f64], y: f64| -(y - x[0]) * (y - x[0]);
                    match oracles::individual_population_equivalence(&scm, &observed, &kernel) {
                        Ok(rep) => {
                            reports.push(rep);
                            done += 1;
                        }
                        Err(pig_core::Error::Resource(_)) => continue,
                        Err(e) => return Err(CliError::from(e)),
                    }
                }
                which => {
                    use rand::RngExt;
                    let dag = pig_core::random::random_dag(&mut r, 4, 0.4, 2);
                    let (scm, family) = pig_core::random::random_discrete_scm(&mut r, &dag, 3);
                    let report = if which == "lemma1" {
                        oracles::stable_blanket_floor(&scm, &family, Loss::Brier)
                            .map_err(CliError::from)?
                    } else {
                        let alpha = r.random::<f64>() - 0.5;
                        let beta = 2.0 * r.random::<f64>() - 1.0;
                        let coefs: Vec<Vec<f64>> = (0..family.len())
                            .map(|_| {
                                (0..scm.dag().covariates().len())
                                    .map(|_| r.random::<f64>() - 0.5)
                                    .collect()
                            })
                            .collect();
                        let costs: Vec<Box<dyn Fn(&[f64]) -> f64>> = coefs
                            .iter()
                            .map(|c| {
                                let c = c.clone();
                                Box::new(move |x: &[f64]| {
                                    c.iter().zip(x).map(|(ci, xi)| ci * xi).sum::<f64>()
                                })
                                    as Box<dyn Fn(&[f64]) -> f64>
                            })
                            .collect();
                        let cost_refs: Vec<&dyn Fn(&[f64]) -> f64> =
                            costs.iter().map(|b| b.as_ref()).collect();
                        oracles::blanket_vs_parents(
                            &scm,
                            &family,
                            Loss::Brier,
                            &oracles::UtilityCase::AffineMinusCost {
                                alpha,
                                beta,
                                costs: cost_refs,
                            },
                        )
                        .map_err(CliError::from)?
                    };
                    reports.push(report);
                    done += 1;
                }
            }
        }
        return Ok(reports);
    }

    let input = args
        .input
        .as_ref()
        .ok_or_else(|| CliError::Schema("this oracle needs a scenario file or --sweep".into()))?;
    let scenario = scenario::load_scenario(
        input
            .to_str()
            .ok_or_else(|| CliError::Schema("bad input path".into()))?,
        &[],
    )?;
    match args.which.as_str() {
        "lemma1" => {
            reports.push(
                oracles::stable_blanket_floor(&scenario.scm, &scenario.family, scenario.loss)
                    .map_err(CliError::from)?,
            );
        }
        "thm2" => {
            reports.push(
                oracles::blanket_vs_parents(
                    &scenario.scm,
                    &scenario.family,
                    scenario.loss,
                    &oracles::UtilityCase::LeaderRisk,
                )
                .map_err(CliError::from)?,
            );
        }
        "individuals" => {
            let observed_labels = split_labels(args.observed.as_deref().unwrap_or(""));
            let dag = scenario.scm.dag();
            let observed: Vec<usize> = observed_labels
                .iter()
                .map(|l| dag.node_id(l).map_err(CliError::from))
                .collect::<CliResult<_>>()?;
            let kernel = |x: &[f64], y: f64| -(y - x[0]) * (y - x[0]);
            reports.push(
                oracles::individual_population_equivalence(&scenario.scm, &observed, &kernel)
                    .map_err(CliError::from)?,
            );
        }
        _ => unreachable!(),
    }
    Ok(reports)
}
