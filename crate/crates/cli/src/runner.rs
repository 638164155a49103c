//! Executes a scenario's (predictor x bound x replicate) grid and writes the
//! result files.
//!
//! Cells run on the rayon pool; results are collected, sorted by cell index,
//! and written by a single owner, so outputs are byte-identical for equal
//! (scenario, flags, seeds) regardless of worker count.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use pig_core::game::{
    follower_grid_response, follower_perturbation_response, EsConfig, GameOutcome,
    GamePredictor,
};
use pig_core::gaussian::LinearScmView;
use pig_core::graph::stable_blanket;
use pig_core::learn::{self, SubsetSearchConfig};
use pig_core::predictors::{self, EnsembleModel, Predict, SubsetPredictor};
use pig_core::rng;
use pig_core::scm::enumerate::{enumerate_discrete, ExactConditional, JointTable};
use pig_core::scm::expr::CompiledExpr;
use pig_core::scm::sample::sample_training;
use pig_core::scm::{Dataset, EnvironmentFamily, Scm};
use pig_core::stats;

use crate::error::{CliError, CliResult};
use crate::scenario::{
    FollowerDef, FollowerMode, LeaderDef, LeaderKind, Metric, Scenario, SweepSpec,
};
use crate::svg;

/// Flag-level overrides of the scenario's replication block.
#[derive(Debug, Default, Clone)]
pub struct RunOverrides {
    pub reps: Option<usize>,
    pub b_grid: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub train_sizes: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct OutcomeRow {
    pub predictor: String,
    pub bound: f64,
    pub chosen_env: String,
    pub follower_value: f64,
    pub leader_risk: f64,
    pub worst_case: Option<f64>,
    pub replicate: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ErrorRow {
    pub predictor: String,
    pub bound: f64,
    pub replicate: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub rows: Vec<OutcomeRow>,
    pub errors: Vec<ErrorRow>,
    pub files: Vec<PathBuf>,
}

/// A leader instance materialized for one replicate.
pub enum OwnedPredictor {
    Affine(pig_core::gaussian::AffinePredictor),
    Subset(SubsetPredictor),
    Ensemble(EnsembleModel),
    Exact(ExactConditional),
    Expr(CompiledExpr),
    Constant(f64),
}

impl Predict for OwnedPredictor {
    fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            OwnedPredictor::Affine(f) => f.predict(x),
            OwnedPredictor::Subset(f) => f.predict_row(x),
            OwnedPredictor::Ensemble(f) => f.predict_row(x),
            OwnedPredictor::Exact(f) => f.predict(x),
            OwnedPredictor::Expr(e) => e.eval(x, 0.0),
            OwnedPredictor::Constant(v) => *v,
        }
    }
}

impl OwnedPredictor {
    fn as_game(&self) -> GamePredictor<'_> {
        match self {
            OwnedPredictor::Affine(f) => GamePredictor::Affine(f),
            other => GamePredictor::General(other),
        }
    }
}

/// Pools the exact joint tables of the training environments (all
/// environments when no training set is declared).
fn pooled_training_table(scm: &Scm, family: &EnvironmentFamily) -> CliResult<JointTable> {
    let indices: Vec<usize> = if family.training_indices().is_empty() {
        (0..family.len()).collect()
    } else {
        family.training_indices().to_vec()
    };
    let tables: Vec<JointTable> = indices
        .iter()
        .map(|&i| {
            enumerate_discrete(scm, family, &family.get(i).label.clone()).map_err(CliError::from)
        })
        .collect::<CliResult<_>>()?;
    let refs: Vec<&JointTable> = tables.iter().collect();
    JointTable::mixture(&refs, None).map_err(CliError::from)
}

fn population_predictor(
    scm: &Scm,
    family: &EnvironmentFamily,
    cols: &[usize],
) -> CliResult<OwnedPredictor> {
    // Prefer the closed form; fall back to exact enumeration.
    if let Ok(view) = LinearScmView::from_scm(scm, family) {
        let reference = family
            .reference_index()
            .or_else(|| family.training_indices().first().copied())
            .unwrap_or(0);
        let label = family.get(reference).label.clone();
        let f = view
            .population_regression_cols(&label, cols)
            .map_err(CliError::from)?;
        return Ok(OwnedPredictor::Affine(f));
    }
    let pooled = pooled_training_table(scm, family)?;
    Ok(OwnedPredictor::Exact(pooled.conditional_means(cols)))
}

pub struct BuiltLeader {
    pub id: String,
    pub predictor: OwnedPredictor,
    pub learn_rows: Vec<pig_core::learn::LearnRow>,
}

/// Builds a leader for one replicate; fitted leaders train on `data`.
pub fn build_leader(
    scenario: &Scenario,
    leader: &LeaderDef,
    data: Option<&Dataset>,
    seed: u64,
) -> CliResult<BuiltLeader> {
    let scm = &scenario.scm;
    let family = &scenario.family;
    let (predictor, learn_rows) = match &leader.kind {
        LeaderKind::FixedAffine(f) => (OwnedPredictor::Affine(f.clone()), Vec::new()),
        LeaderKind::FixedExpr(e) => (OwnedPredictor::Expr(e.clone()), Vec::new()),
        LeaderKind::FixedConstant(v) => (OwnedPredictor::Constant(*v), Vec::new()),
        LeaderKind::Rule {
            columns,
            learner,
            population,
        } => {
            if *population {
                (population_predictor(scm, family, columns)?, Vec::new())
            } else {
                let data = data.ok_or_else(|| {
                    CliError::Schema(format!(
                        "leader `{}` needs training data; set replication.n_train",
                        leader.id
                    ))
                })?;
                let config = learner.clone().expect("fitted leader").with_seed(seed);
                let fit = predictors::fit(data, columns, &config).map_err(CliError::from)?;
                (OwnedPredictor::Subset(fit), Vec::new())
            }
        }
        LeaderKind::Learned {
            imp,
            options,
            learner,
        } => {
            let data = data.ok_or_else(|| {
                CliError::Schema(format!(
                    "leader `{}` needs training data; set replication.n_train",
                    leader.id
                ))
            })?;
            let mut config = SubsetSearchConfig::new(scenario.task, options.test, seed);
            config.alpha_inv = options.alpha_inv;
            config.alpha_pred = options.alpha_pred;
            config.bootstrap = options.bootstrap;
            config.max_subset_size = options.max_subset_size;
            if let Some(l) = learner {
                config.learner = l.clone().with_seed(seed);
            }
            if let Some(s) = &options.screen {
                config.screening = crate::scenario::parse_screening(s)?;
            }
            let (cols, _) = learn::screen(data, &config).map_err(CliError::from)?;
            let candidates =
                learn::enumerate_subsets(&cols, config.max_subset_size).map_err(CliError::from)?;
            if *imp {
                let result = learn::imp(data, &candidates, &config).map_err(CliError::from)?;
                (OwnedPredictor::Subset(result.predictor), result.rows)
            } else {
                let result =
                    learn::stabilized(data, &candidates, &config).map_err(CliError::from)?;
                (OwnedPredictor::Ensemble(result.ensemble), result.rows)
            }
        }
    };
    Ok(BuiltLeader {
        id: leader.id.clone(),
        predictor,
        learn_rows,
    })
}

fn run_cell(
    scenario: &Scenario,
    follower: &FollowerDef,
    leader: &BuiltLeader,
    bound: f64,
    n_eval: usize,
    seed: u64,
) -> CliResult<GameOutcome> {
    let scm = &scenario.scm;
    let family = &scenario.family;
    match &follower.mode {
        FollowerMode::Grid { n_query, exact } => follower_grid_response(
            scm,
            family,
            &leader.predictor.as_game(),
            &leader.id,
            &follower.objective,
            scenario.loss,
            bound,
            *n_query,
            *exact,
            seed,
        )
        .map_err(CliError::from),
        FollowerMode::Perturbation { specs, es } => {
            let config = EsConfig {
                eval: n_eval,
                ..es.clone()
            };
            follower_perturbation_response(
                scm,
                &leader.predictor.as_game(),
                &leader.id,
                specs,
                &follower.objective,
                scenario.loss,
                bound,
                &config,
                seed,
            )
            .map(|(_, outcome)| outcome)
            .map_err(CliError::from)
        }
    }
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        // Debug formatting is the shortest round-trip representation.
        format!("{v:?}")
    }
}

fn write_file(path: &Path, content: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(content.as_bytes())?;
    Ok(())
}

/// Runs a scenario and writes CSV/SVG artifacts into `out_dir`.
pub fn run_scenario(
    scenario: &Scenario,
    overrides: &RunOverrides,
    out_dir: &Path,
) -> CliResult<RunSummary> {
    if let Some(sweep) = &scenario.oracle_sweep {
        return run_sweep(scenario, sweep, overrides, out_dir);
    }
    let follower = scenario
        .follower
        .as_ref()
        .ok_or_else(|| CliError::Schema("scenario has no follower".into()))?;
    let reps = overrides.reps.unwrap_or(scenario.replication.reps);
    let base_seed = overrides.seed.unwrap_or(scenario.replication.seed);
    let bounds = overrides
        .b_grid
        .clone()
        .unwrap_or_else(|| follower.bounds.clone());
    if bounds.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return Err(CliError::Schema("bounds must lie in [0, 1]".into()));
    }
    let train_sizes: Vec<Option<usize>> = match overrides
        .train_sizes
        .clone()
        .or_else(|| scenario.replication.train_sizes.clone())
    {
        Some(sizes) => sizes.into_iter().map(Some).collect(),
        None => vec![scenario.replication.n_train],
    };
    let n_eval = scenario.replication.n_eval;

    // One work unit per (replicate, train size): leaders are fitted once and
    // then face every bound.
    struct Unit {
        rep: usize,
        n_train: Option<usize>,
    }
    let units: Vec<Unit> = (0..reps)
        .flat_map(|rep| {
            train_sizes
                .iter()
                .map(move |&n_train| Unit { rep, n_train })
                .collect::<Vec<_>>()
        })
        .collect();

    type UnitOut = (Vec<(usize, OutcomeRow)>, Vec<ErrorRow>, Vec<String>);
    let unit_results: Vec<UnitOut> = units
        .par_iter()
        .enumerate()
        .map(|(unit_idx, unit)| {
            let mut rows = Vec::new();
            let mut errors = Vec::new();
            let mut learn_lines = Vec::new();
            let size_tag = |id: &str| match (train_sizes.len() > 1, unit.n_train) {
                (true, Some(n)) => format!("{id}@n={n}"),
                _ => id.to_string(),
            };
            // Shared training draw for every leader in this unit.
            let data = match unit.n_train {
                Some(n) => {
                    let data_seed = rng::derive(base_seed, &[0xda7a, unit.rep as u64, n as u64]);
                    match sample_training(&scenario.scm, &scenario.family, n, data_seed) {
                        Ok(d) => Some(d),
                        Err(e) => {
                            for b in &bounds {
                                for leader in &scenario.leaders {
                                    errors.push(ErrorRow {
                                        predictor: size_tag(&leader.id),
                                        bound: *b,
                                        replicate: unit.rep,
                                        message: e.to_string(),
                                    });
                                }
                            }
                            return (rows, errors, learn_lines);
                        }
                    }
                }
                None => None,
            };
            for (leader_idx, leader) in scenario.leaders.iter().enumerate() {
                let fit_seed = rng::derive(
                    base_seed,
                    &[0xf17, unit.rep as u64, leader_idx as u64, unit.n_train.unwrap_or(0) as u64],
                );
                let built = match build_leader(scenario, leader, data.as_ref(), fit_seed) {
                    Ok(b) => b,
                    Err(e) => {
                        for b in &bounds {
                            errors.push(ErrorRow {
                                predictor: size_tag(&leader.id),
                                bound: *b,
                                replicate: unit.rep,
                                message: e.to_string(),
                            });
                        }
                        continue;
                    }
                };
                for row in &built.learn_rows {
                    learn_lines.push(format!(
                        "{},{},{},{},{},{},{},{}",
                        size_tag(&leader.id),
                        unit.rep,
                        row.subset.join(";"),
                        fmt_f64(row.s_inv),
                        row.s_pred.map(fmt_f64).unwrap_or_default(),
                        row.passed_inv,
                        row.passed_pred,
                        fmt_f64(row.weight),
                    ));
                }
                for (b_idx, &bound) in bounds.iter().enumerate() {
                    let cell_seed = rng::derive(
                        base_seed,
                        &[
                            0x9a3e,
                            unit.rep as u64,
                            unit.n_train.unwrap_or(0) as u64,
                            leader_idx as u64,
                            b_idx as u64,
                        ],
                    );
                    match run_cell(scenario, follower, &built, bound, n_eval, cell_seed) {
                        Ok(outcome) => rows.push((
                            unit_idx * 1_000_000 + leader_idx * 1000 + b_idx,
                            OutcomeRow {
                                predictor: size_tag(&leader.id),
                                bound,
                                chosen_env: outcome.best_labels.join("|"),
                                follower_value: outcome.follower_value,
                                leader_risk: outcome.leader_risk,
                                worst_case: outcome.worst_case,
                                replicate: unit.rep,
                                seed: cell_seed,
                            },
                        )),
                        Err(e) => errors.push(ErrorRow {
                            predictor: size_tag(&leader.id),
                            bound,
                            replicate: unit.rep,
                            message: e.to_string(),
                        }),
                    }
                }
            }
            (rows, errors, learn_lines)
        })
        .collect();

    let mut indexed_rows = Vec::new();
    let mut errors = Vec::new();
    let mut learn_lines = Vec::new();
    for (r, e, l) in unit_results {
        indexed_rows.extend(r);
        errors.extend(e);
        learn_lines.extend(l);
    }
    indexed_rows.sort_by_key(|(idx, _)| *idx);
    let rows: Vec<OutcomeRow> = indexed_rows.into_iter().map(|(_, r)| r).collect();

    if rows.is_empty() && !errors.is_empty() {
        return Err(CliError::Other(format!(
            "all {} cells failed; first error: {}",
            errors.len(),
            errors[0].message
        )));
    }

    let mut files = Vec::new();
    let name = &scenario.name;
    if scenario.outputs.csv {
        let mut csv = String::from(
            "predictor,b,chosen_env,follower_value,leader_risk,worst_case,replicate,seed\n",
        );
        for r in &rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.predictor,
                fmt_f64(r.bound),
                r.chosen_env,
                fmt_f64(r.follower_value),
                fmt_f64(r.leader_risk),
                r.worst_case.map(fmt_f64).unwrap_or_default(),
                r.replicate,
                r.seed
            ));
        }
        let path = out_dir.join(format!("{name}_outcomes.csv"));
        write_file(&path, &csv)?;
        files.push(path);

        // Aggregate with normal-approximation confidence intervals.
        let mut agg = String::from("predictor,b,mean_risk,ci_lo,ci_hi,reps\n");
        let mut keys: Vec<(String, f64)> = Vec::new();
        for r in &rows {
            if !keys.iter().any(|(p, b)| *p == r.predictor && *b == r.bound) {
                keys.push((r.predictor.clone(), r.bound));
            }
        }
        let mut series_map: Vec<(String, Vec<(f64, f64, f64, f64)>)> = Vec::new();
        for (p, b) in &keys {
            let risks: Vec<f64> = rows
                .iter()
                .filter(|r| r.predictor == *p && r.bound == *b)
                .map(|r| r.leader_risk)
                .collect();
            let (mean, sd) = stats::mean_sd(&risks);
            let half = 1.96 * sd / (risks.len() as f64).sqrt();
            agg.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p,
                fmt_f64(*b),
                fmt_f64(mean),
                fmt_f64(mean - half),
                fmt_f64(mean + half),
                risks.len()
            ));
            match series_map.iter_mut().find(|(n, _)| n == p) {
                Some((_, pts)) => pts.push((*b, mean, mean - half, mean + half)),
                None => series_map.push((p.clone(), vec![(*b, mean, mean - half, mean + half)])),
            }
        }
        let path = out_dir.join(format!("{name}_aggregate.csv"));
        write_file(&path, &agg)?;
        files.push(path);

        if scenario.outputs.svg {
            let series: Vec<svg::Series> = series_map
                .into_iter()
                .map(|(n, mut pts)| {
                    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                    svg::Series { name: n, points: pts }
                })
                .collect();
            let mut buf = Vec::new();
            svg::write_chart(
                &mut buf,
                &format!("{name}: deployment risk vs intervention bound"),
                "intervention bound b",
                "leader risk",
                &series,
            )?;
            let path = out_dir.join(format!("{name}_risk_vs_bound.svg"));
            write_file(&path, &String::from_utf8_lossy(&buf))?;
            files.push(path);
        }
    }
    if !errors.is_empty() {
        let mut csv = String::from("predictor,b,replicate,error\n");
        for e in &errors {
            csv.push_str(&format!(
                "{},{},{},\"{}\"\n",
                e.predictor,
                fmt_f64(e.bound),
                e.replicate,
                e.message.replace('"', "'")
            ));
        }
        let path = out_dir.join(format!("{name}_errors.csv"));
        write_file(&path, &csv)?;
        files.push(path);
    }
    if scenario.outputs.learn_report && !learn_lines.is_empty() {
        let mut csv =
            String::from("predictor,replicate,subset,s_inv,s_pred,passed_inv,passed_pred,weight\n");
        learn_lines.sort();
        for line in &learn_lines {
            csv.push_str(line);
            csv.push('\n');
        }
        let path = out_dir.join(format!("{name}_learning.csv"));
        write_file(&path, &csv)?;
        files.push(path);
    }
    if scenario.metric == Metric::Accuracy {
        let path = out_dir.join(format!("{name}_accuracy.csv"));
        let csv = accuracy_table(scenario)?;
        write_file(&path, &csv)?;
        files.push(path);
    }

    Ok(RunSummary { rows, errors, files })
}

/// Exact per-environment accuracy of every leader (discrete SCMs only);
/// probabilistic outputs are thresholded at 1/2.
fn accuracy_table(scenario: &Scenario) -> CliResult<String> {
    let mut csv = String::from("predictor,env,accuracy\n");
    for leader in &scenario.leaders {
        let built = build_leader(scenario, leader, None, 0)?;
        for env in scenario.family.environments() {
            let joint = enumerate_discrete(&scenario.scm, &scenario.family, &env.label)
                .map_err(CliError::from)?;
            let acc = joint.accuracy(|x| {
                let q = built.predictor.predict_row(x);
                if q >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            });
            csv.push_str(&format!("{},{},{}\n", leader.id, env.label, fmt_f64(acc)));
        }
    }
    Ok(csv)
}

fn run_sweep(
    scenario: &Scenario,
    sweep: &SweepSpec,
    overrides: &RunOverrides,
    out_dir: &Path,
) -> CliResult<RunSummary> {
    let SweepSpec::WorstCaseOptimality { scms, predictors } = sweep;
    let seed = overrides.seed.unwrap_or(scenario.replication.seed);
    let report = worst_case_sweep(*scms, *predictors, seed)?;
    let mut csv = String::from("instance,worst_case_sb,min_margin,passed\n");
    for row in &report {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.0,
            fmt_f64(row.1),
            fmt_f64(row.2),
            row.3
        ));
    }
    let path = out_dir.join(format!("{}_sweep.csv", scenario.name));
    write_file(&path, &csv)?;
    if report.iter().any(|r| !r.3) {
        return Err(CliError::Other("worst-case sweep found a violation".into()));
    }
    Ok(RunSummary {
        rows: Vec::new(),
        errors: Vec::new(),
        files: vec![path],
    })
}

/// Random strong-intervention instances: the stable-blanket regression must
/// be worst-case optimal against random affine predictors. Returns
/// `(instance, worst_sb, min_margin, passed)` rows.
pub fn worst_case_sweep(
    scms: usize,
    predictors: usize,
    seed: u64,
) -> CliResult<Vec<(usize, f64, f64, bool)>> {
    use rand::RngExt;
    let mut r = rng::stream(seed, &[0x5feb]);
    let mut rows = Vec::new();
    let mut instance = 0;
    while rows.len() < scms {
        instance += 1;
        if instance > 200 * scms {
            return Err(CliError::Other("instance generation stalled".into()));
        }
        let Some((dag, view)) = pig_core::random::random_linear_star_instance(&mut r, 5) else {
            continue;
        };
        let sb = stable_blanket(&dag);
        let f_sb = view
            .population_regression("obs", &sb, &dag)
            .map_err(CliError::from)?;
        let worst_sb = view
            .env_labels()
            .iter()
            .map(|e| view.population_risk(e, &f_sb).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let d = view.d();
        let mut min_margin = f64::INFINITY;
        for _ in 0..predictors {
            let weights: Vec<f64> = (0..d).map(|_| 2.0 * r.random::<f64>() - 1.0).collect();
            let f = pig_core::gaussian::AffinePredictor::new(
                (0..d).collect(),
                weights,
                r.random::<f64>() - 0.5,
            );
            let worst_f = view
                .env_labels()
                .iter()
                .map(|e| view.population_risk(e, &f).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            min_margin = min_margin.min(worst_f - worst_sb);
        }
        rows.push((rows.len(), worst_sb, min_margin, min_margin >= -1e-9));
    }
    Ok(rows)
}

/// Runs one scenario fully in memory (used by tests).
pub fn run_to_dir(
    source: &str,
    overrides: &RunOverrides,
    params: &[(String, f64)],
    out_dir: &Path,
) -> CliResult<RunSummary> {
    let scenario = crate::scenario::load_scenario(source, params)?;
    run_scenario(&scenario, overrides, out_dir)
}
