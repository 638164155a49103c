//! The Stackelberg layer: follower best responses and worst-case risks.
//!
//! The follower either picks from a finite environment grid (the `ceil(n*b)`
//! environments nearest a reference) or optimizes bounded perturbation
//! policies with a derivative-free search. Leader risks are evaluated by
//! exact enumeration, linear-Gaussian analytics, or Monte Carlo.

pub mod oracles;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{AffinePredictor, LinearScmView};
use crate::predictors::{eval_loss, Loss, Predict};
use crate::rng;
use crate::scm::expr::CompiledExpr;
use crate::scm::sample::sample;
use crate::scm::enumerate::enumerate_discrete;
use crate::scm::{
    make_perturbed_env, Dataset, Environment, EnvironmentFamily, PerturbationPolicy,
    PolicyInput, PolicyShape, Scm,
};
use crate::stats;

/// What the follower maximizes.
#[derive(Debug, Clone)]
pub enum FollowerObjective {
    /// The leader's own risk (adversarial follower).
    LeaderRisk { loss: Loss },
    /// `sign * (alpha + beta * E[f(X)])`; zero cost.
    MeanPrediction { sign: f64, alpha: f64, beta: f64 },
    /// `alpha + beta * E[f(X)] - E[c_e(X)]`, one cost per environment
    /// (indexed like the family; compiled over covariate columns).
    AffinePredMinusCost {
        alpha: f64,
        beta: f64,
        costs: Vec<CompiledExpr>,
    },
}

/// Risk evaluation backend.
#[derive(Debug, Clone, Copy)]
pub enum Backend {
    /// Exact enumeration; discrete SCMs only.
    Exact,
    /// Closed form; linear-Gaussian SCMs and affine predictors only.
    Analytic,
    MonteCarlo { n: usize, seed: u64 },
}

/// A deployed predictor, tagged so the analytic backend can see affinity.
pub enum GamePredictor<'a> {
    General(&'a dyn Predict),
    Affine(&'a AffinePredictor),
}

impl GamePredictor<'_> {
    pub fn as_predict(&self) -> &dyn Predict {
        match self {
            GamePredictor::General(f) => *f,
            GamePredictor::Affine(f) => *f,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnvRisk {
    pub label: String,
    pub risk: f64,
    pub se: f64,
}

/// The outcome of one follower response.
#[derive(Debug, Clone)]
pub struct GameOutcome {
    pub predictor: String,
    pub bound: f64,
    /// Environments available to the follower.
    pub choice_labels: Vec<String>,
    /// The follower's best-response set (ties within tolerance).
    pub best_labels: Vec<String>,
    pub follower_value: f64,
    /// Max leader risk over the best-response set.
    pub leader_risk: f64,
    pub leader_risk_se: f64,
    /// Max leader risk over the whole choice set, when computed.
    pub worst_case: Option<f64>,
    pub risk_table: Vec<EnvRisk>,
    pub seed: u64,
}

/// Leader risk in one environment under the chosen backend.
/// Returns `(risk, standard_error)`; exact backends report zero error.
pub fn risk_in_env(
    scm: &Scm,
    family: &EnvironmentFamily,
    env_label: &str,
    f: &GamePredictor,
    loss: Loss,
    backend: Backend,
) -> Result<(f64, f64)> {
    match backend {
        Backend::Exact => {
            let joint = enumerate_discrete(scm, family, env_label)?;
            let p = f.as_predict();
            Ok((joint.expectation(|x, y| eval_loss(loss, y, p.predict_row(x))), 0.0))
        }
        Backend::Analytic => {
            let affine = match f {
                GamePredictor::Affine(a) => a,
                GamePredictor::General(_) => {
                    return Err(Error::input(
                        "analytic backend needs an affine predictor",
                    ))
                }
            };
            if loss == Loss::Log {
                return Err(Error::input("analytic backend supports squared losses"));
            }
            let view = LinearScmView::from_scm(scm, family)?;
            Ok((view.population_risk(env_label, affine)?, 0.0))
        }
        Backend::MonteCarlo { n, seed } => {
            let data = sample(scm, family, env_label, n, seed)?;
            mc_risk(&data, f.as_predict(), loss)
        }
    }
}

fn mc_risk(data: &Dataset, f: &dyn Predict, loss: Loss) -> Result<(f64, f64)> {
    let n = data.n();
    let mut losses = Vec::with_capacity(n);
    let mut row = vec![0.0; data.d()];
    for i in 0..n {
        for j in 0..data.d() {
            row[j] = data.x[(i, j)];
        }
        losses.push(eval_loss(loss, data.y[i], f.predict_row(&row)));
    }
    let (mean, sd) = stats::mean_sd(&losses);
    Ok((mean, sd / (n as f64).sqrt()))
}

/// `sup_e R_e(f)` over the family, with the per-environment table.
pub fn worst_case_risk(
    scm: &Scm,
    family: &EnvironmentFamily,
    f: &GamePredictor,
    loss: Loss,
    backend: Backend,
) -> Result<(f64, Vec<EnvRisk>)> {
    if family.is_empty() {
        return Err(Error::input("worst-case risk over an empty family"));
    }
    let mut table = Vec::with_capacity(family.len());
    for (idx, env) in family.environments().iter().enumerate() {
        let backend = match backend {
            Backend::MonteCarlo { n, seed } => Backend::MonteCarlo {
                n,
                seed: rng::derive(seed, &[0x3e, idx as u64]),
            },
            other => other,
        };
        let (risk, se) = risk_in_env(scm, family, &env.label, f, loss, backend)?;
        table.push(EnvRisk {
            label: env.label.clone(),
            risk,
            se,
        });
    }
    let max = table.iter().map(|r| r.risk).fold(f64::NEG_INFINITY, f64::max);
    Ok((max, table))
}

/// Indices of the `ceil(n * b)` environments nearest the reference under the
/// normalized l-infinity distance on parameter vectors; `b = 0` keeps only
/// the reference.
pub fn choice_set(family: &EnvironmentFamily, bound: f64) -> Result<Vec<usize>> {
    let n = family.len();
    if bound >= 1.0 {
        return Ok((0..n).collect());
    }
    let reference = family.reference_index().ok_or_else(|| {
        Error::input("bounded grids need a reference environment")
    })?;
    let count = ((n as f64 * bound).ceil() as usize).max(1);
    let ref_params = family.get(reference).params.clone().ok_or_else(|| {
        Error::input("bounded grids need environment parameter vectors")
    })?;
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    for (idx, env) in family.environments().iter().enumerate() {
        let params = env.params.as_ref().ok_or_else(|| {
            Error::input(format!("environment `{}` lacks parameters", env.label))
        })?;
        if params.len() != ref_params.len() {
            return Err(Error::input("environment parameter lengths differ"));
        }
        let mut dist: f64 = 0.0;
        for (i, (p, r)) in params.iter().zip(&ref_params).enumerate() {
            let scale = family
                .param_scale
                .as_ref()
                .and_then(|s| s.get(i).copied())
                .unwrap_or(1.0)
                .max(1e-12);
            dist = dist.max((p - r).abs() / scale);
        }
        order.push((dist, idx));
    }
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    Ok(order.into_iter().take(count).map(|(_, i)| i).collect())
}

/// Follower utility in one environment. Returns `(value, standard_error)`.
fn follower_value(
    scm: &Scm,
    family: &EnvironmentFamily,
    env_idx: usize,
    f: &GamePredictor,
    obj: &FollowerObjective,
    exact: bool,
    n_query: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let label = family.get(env_idx).label.clone();
    if exact {
        let joint = enumerate_discrete(scm, family, &label)?;
        let p = f.as_predict();
        let value = match obj {
            FollowerObjective::LeaderRisk { loss } => {
                joint.expectation(|x, y| eval_loss(*loss, y, p.predict_row(x)))
            }
            FollowerObjective::MeanPrediction { sign, alpha, beta } => {
                sign * (alpha + beta * joint.expectation(|x, _| p.predict_row(x)))
            }
            FollowerObjective::AffinePredMinusCost { alpha, beta, costs } => {
                let cost = &costs[env_idx];
                alpha + beta * joint.expectation(|x, _| p.predict_row(x))
                    - joint.expectation(|x, _| cost.eval(x, 0.0))
            }
        };
        return Ok((value, 0.0));
    }
    let data = sample(scm, family, &label, n_query, seed)?;
    let p = f.as_predict();
    let mut contributions = Vec::with_capacity(data.n());
    let mut row = vec![0.0; data.d()];
    for i in 0..data.n() {
        for j in 0..data.d() {
            row[j] = data.x[(i, j)];
        }
        let v = match obj {
            FollowerObjective::LeaderRisk { loss } => {
                eval_loss(*loss, data.y[i], p.predict_row(&row))
            }
            FollowerObjective::MeanPrediction { sign, alpha, beta } => {
                sign * (alpha + beta * p.predict_row(&row))
            }
            FollowerObjective::AffinePredMinusCost { alpha, beta, costs } => {
                alpha + beta * p.predict_row(&row) - costs[env_idx].eval(&row, 0.0)
            }
        };
        contributions.push(v);
    }
    let (mean, sd) = stats::mean_sd(&contributions);
    Ok((mean, sd / (data.n() as f64).sqrt()))
}

/// Follower best response over a finite environment grid.
///
/// The follower evaluates its utility (exactly, or from `n_query` fresh
/// samples per environment) on the `ceil(n*b)` environments nearest the
/// reference and picks the argmax set; the leader's risk is reported
/// pessimistically as the maximum over that set.
#[allow(clippy::too_many_arguments)]
pub fn follower_grid_response(
    scm: &Scm,
    family: &EnvironmentFamily,
    f: &GamePredictor,
    name: &str,
    obj: &FollowerObjective,
    loss: Loss,
    bound: f64,
    n_query: usize,
    exact: bool,
    seed: u64,
) -> Result<GameOutcome> {
    if family.is_empty() {
        return Err(Error::input("follower response over an empty family"));
    }
    if n_query == 0 {
        return Err(Error::input("n_query must be >= 1"));
    }
    let chosen = choice_set(family, bound)?;

    let mut values = Vec::with_capacity(chosen.len());
    for (pos, &env_idx) in chosen.iter().enumerate() {
        let value_seed = rng::derive(seed, &[0xfa11, pos as u64]);
        values.push(follower_value(
            scm, family, env_idx, f, obj, exact, n_query, value_seed,
        )?);
    }
    let (max_value, max_se) = values
        .iter()
        .copied()
        .fold((f64::NEG_INFINITY, 0.0), |acc, (v, se)| {
            if v > acc.0 {
                (v, se)
            } else {
                acc
            }
        });
    let best: Vec<usize> = chosen
        .iter()
        .enumerate()
        .filter(|(pos, _)| {
            let (v, se) = values[*pos];
            let tol = if exact {
                1e-12
            } else {
                2.0 * (se * se + max_se * max_se).sqrt()
            };
            v >= max_value - tol
        })
        .map(|(_, &idx)| idx)
        .collect();

    // Leader risks over the choice set; fresh streams per environment.
    let mut table = Vec::with_capacity(chosen.len());
    for (pos, &env_idx) in chosen.iter().enumerate() {
        let label = family.get(env_idx).label.clone();
        let backend = if exact {
            Backend::Exact
        } else {
            Backend::MonteCarlo {
                n: n_query,
                seed: rng::derive(seed, &[0x415c, pos as u64]),
            }
        };
        let (risk, se) = risk_in_env(scm, family, &label, f, loss, backend)?;
        table.push(EnvRisk { label, risk, se });
    }
    let worst = table.iter().map(|r| r.risk).fold(f64::NEG_INFINITY, f64::max);
    let (mut leader_risk, mut leader_se) = (f64::NEG_INFINITY, 0.0);
    for (pos, &env_idx) in chosen.iter().enumerate() {
        if best.contains(&env_idx) && table[pos].risk > leader_risk {
            leader_risk = table[pos].risk;
            leader_se = table[pos].se;
        }
    }
    Ok(GameOutcome {
        predictor: name.to_string(),
        bound,
        choice_labels: chosen
            .iter()
            .map(|&i| family.get(i).label.clone())
            .collect(),
        best_labels: best
            .iter()
            .map(|&i| family.get(i).label.clone())
            .collect(),
        follower_value: max_value,
        leader_risk,
        leader_risk_se: leader_se,
        worst_case: Some(worst),
        risk_table: table,
        seed,
    })
}

/// Configuration of the derivative-free policy search.
#[derive(Debug, Clone)]
pub struct EsConfig {
    pub population: usize,
    pub iterations: usize,
    pub restarts: usize,
    /// Fresh sample size per candidate evaluation.
    pub batch: usize,
    /// Held-out sample size for picking the best restart.
    pub heldout: usize,
    /// Final fresh sample size for the deployment risk.
    pub eval: usize,
    pub sigma0: f64,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig {
            population: 16,
            iterations: 300,
            restarts: 5,
            batch: 512,
            heldout: 10_000,
            eval: 10_000,
            sigma0: 0.5,
        }
    }
}

/// Blueprint of one perturbation policy (parameters filled by the search).
#[derive(Debug, Clone)]
pub struct PolicySpec {
    pub target: String,
    pub inputs: Vec<PolicyInput>,
    pub shape: PolicyShape,
}

impl PolicySpec {
    pub fn constant(target: &str) -> Self {
        PolicySpec {
            target: target.to_string(),
            inputs: Vec::new(),
            shape: PolicyShape::Constant,
        }
    }

    pub fn net(target: &str, inputs: Vec<PolicyInput>, hidden: Vec<usize>) -> Self {
        PolicySpec {
            target: target.to_string(),
            inputs,
            shape: PolicyShape::Net { hidden },
        }
    }

    fn instantiate(&self, bound: f64, params: &[f64]) -> PerturbationPolicy {
        PerturbationPolicy {
            target: self.target.clone(),
            inputs: self.inputs.clone(),
            bound,
            shape: self.shape.clone(),
            params: params.to_vec(),
        }
    }

    fn param_count(&self) -> usize {
        PerturbationPolicy::param_count_for(&self.shape, self.inputs.len())
    }
}

fn build_policies(specs: &[PolicySpec], bound: f64, theta: &[f64]) -> Vec<PerturbationPolicy> {
    let mut policies = Vec::with_capacity(specs.len());
    let mut offset = 0;
    for spec in specs {
        let count = spec.param_count();
        policies.push(spec.instantiate(bound, &theta[offset..offset + count]));
        offset += count;
    }
    policies
}

fn utility_on_env(
    scm: &Scm,
    env: &Environment,
    f: &dyn Predict,
    obj: &FollowerObjective,
    loss: Loss,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let family = EnvironmentFamily::new(vec![env.clone()])?;
    let data = sample(scm, &family, &env.label, n, seed)?;
    let mut total = 0.0;
    let mut row = vec![0.0; data.d()];
    for i in 0..data.n() {
        for j in 0..data.d() {
            row[j] = data.x[(i, j)];
        }
        total += match obj {
            FollowerObjective::LeaderRisk { loss: l } => eval_loss(*l, data.y[i], f.predict_row(&row)),
            FollowerObjective::MeanPrediction { sign, alpha, beta } => {
                sign * (alpha + beta * f.predict_row(&row))
            }
            FollowerObjective::AffinePredMinusCost { alpha, beta, costs } => {
                alpha + beta * f.predict_row(&row) - costs[0].eval(&row, 0.0)
            }
        };
    }
    let _ = loss;
    Ok(total / data.n() as f64)
}

/// Optimizes bounded perturbation policies against the deployed predictor
/// with a `(1+lambda)` evolution strategy over fresh batches, then reports
/// the deployment risk on a final fresh sample.
#[allow(clippy::too_many_arguments)]
pub fn follower_perturbation_response(
    scm: &Scm,
    f: &GamePredictor,
    name: &str,
    specs: &[PolicySpec],
    obj: &FollowerObjective,
    loss: Loss,
    bound: f64,
    config: &EsConfig,
    seed: u64,
) -> Result<(Vec<PerturbationPolicy>, GameOutcome)> {
    if specs.is_empty() {
        return Err(Error::input("perturbation response needs at least one target"));
    }
    let dim: usize = specs.iter().map(|s| s.param_count()).sum();
    // Validate the blueprint once with zero parameters.
    for p in build_policies(specs, bound, &vec![0.0; dim]) {
        p.validate_against(scm)?;
    }
    let predict = f.as_predict();

    let restart_results: Vec<(f64, Vec<f64>)> = (0..config.restarts)
        .into_par_iter()
        .map(|restart| -> Result<(f64, Vec<f64>)> {
            let mut es_rng = rng::stream(seed, &[0xe5, restart as u64]);
            let mut theta = vec![0.0; dim];
            for t in theta.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut es_rng);
                *t = 0.5 * z;
            }
            let mut sigma = config.sigma0;
            for iter in 0..config.iterations {
                let batch_seed = rng::derive(seed, &[0xba7c, restart as u64, iter as u64]);
                // Re-evaluate the incumbent on this iteration's batch so the
                // comparison shares the sampling noise.
                let env = make_perturbed_env(scm, "search", &build_policies(specs, bound, &theta))?;
                let current_value =
                    utility_on_env(scm, &env, predict, obj, loss, config.batch, batch_seed)?;
                let mut best_candidate: Option<(f64, Vec<f64>)> = None;
                for _ in 0..config.population {
                    let mut candidate = theta.clone();
                    for c in candidate.iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut es_rng);
                        *c += sigma * z;
                    }
                    let env =
                        make_perturbed_env(scm, "search", &build_policies(specs, bound, &candidate))?;
                    let value =
                        match utility_on_env(scm, &env, predict, obj, loss, config.batch, batch_seed)
                        {
                            Ok(v) if v.is_finite() => v,
                            // Non-finite objective: abort this candidate.
                            _ => f64::NEG_INFINITY,
                        };
                    if best_candidate.as_ref().map_or(true, |(bv, _)| value > *bv) {
                        best_candidate = Some((value, candidate));
                    }
                }
                if let Some((value, candidate)) = best_candidate {
                    if value >= current_value {
                        theta = candidate;
                        sigma = (sigma * 1.15).min(2.0);
                    } else {
                        sigma = (sigma * 0.96).max(1e-3);
                    }
                }
            }
            // Held-out evaluation shared across restarts.
            let env = make_perturbed_env(scm, "search", &build_policies(specs, bound, &theta))?;
            let held = utility_on_env(
                scm,
                &env,
                predict,
                obj,
                loss,
                config.heldout,
                rng::derive(seed, &[0x4e1d]),
            )?;
            Ok((held, theta))
        })
        .collect::<Result<_>>()?;

    let (_, best_theta) = restart_results
        .into_iter()
        .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .expect("at least one restart");
    let policies = build_policies(specs, bound, &best_theta);
    let deployed = make_perturbed_env(scm, "deployed", &policies)?;
    let family = EnvironmentFamily::new(vec![deployed.clone()])?;
    let eval_data = sample(
        scm,
        &family,
        "deployed",
        config.eval,
        rng::derive(seed, &[0x7e5a]),
    )?;
    let (risk, se) = mc_risk(&eval_data, predict, loss)?;
    let held_value = utility_on_env(
        scm,
        &deployed,
        predict,
        obj,
        loss,
        config.heldout,
        rng::derive(seed, &[0x4e1d]),
    )?;
    let worst_case = match obj {
        FollowerObjective::LeaderRisk { .. } => Some(risk),
        _ => None,
    };
    let outcome = GameOutcome {
        predictor: name.to_string(),
        bound,
        choice_labels: vec!["deployed".to_string()],
        best_labels: vec!["deployed".to_string()],
        follower_value: held_value,
        leader_risk: risk,
        leader_risk_se: se,
        worst_case,
        risk_table: vec![EnvRisk {
            label: "deployed".to_string(),
            risk,
            se,
        }],
        seed,
    };
    Ok((policies, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn grid_game_on_star_model() {
        let scm = presets::star_scm(0.25);
        let family = presets::star_family();
        // The four-point classifier.
        let table = move |x: &[f64]| -> f64 {
            let p = 0.25;
            match (x[0] as i64, x[1] as i64) {
                (0, 0) => 0.0,
                (1, 0) => 1.0,
                (0, 1) => p,
                _ => 1.0 - p,
            }
        };
        let wrapped = crate::predictors::FnPredictor(table);
        let f = GamePredictor::General(&wrapped);
        let outcome = follower_grid_response(
            &scm,
            &family,
            &f,
            "four-point",
            &FollowerObjective::LeaderRisk { loss: Loss::Brier },
            Loss::Brier,
            1.0,
            1,
            true,
            3,
        )
        .unwrap();
        assert_eq!(outcome.best_labels, vec!["q1".to_string()]);
        assert!((outcome.leader_risk - 0.1875).abs() < 1e-12);
        assert_eq!(outcome.worst_case, Some(outcome.leader_risk));

        // The stable-blanket predictor is constant 1/2 with risk 1/4 everywhere.
        let constant = crate::predictors::FnPredictor(|_: &[f64]| 0.5);
        let f = GamePredictor::General(&constant);
        let outcome = follower_grid_response(
            &scm,
            &family,
            &f,
            "sb",
            &FollowerObjective::LeaderRisk { loss: Loss::Brier },
            Loss::Brier,
            1.0,
            1,
            true,
            3,
        )
        .unwrap();
        assert_eq!(outcome.best_labels.len(), 3);
        assert!((outcome.leader_risk - 0.25).abs() < 1e-12);
    }

    #[test]
    fn bound_zero_restricts_to_reference() {
        let scm = presets::star_scm(0.25);
        let family = presets::star_family();
        let constant = crate::predictors::FnPredictor(|_: &[f64]| 0.5);
        let f = GamePredictor::General(&constant);
        let outcome = follower_grid_response(
            &scm,
            &family,
            &f,
            "sb",
            &FollowerObjective::LeaderRisk { loss: Loss::Brier },
            Loss::Brier,
            0.0,
            1,
            true,
            3,
        )
        .unwrap();
        assert_eq!(outcome.choice_labels, vec!["q0.5".to_string()]);
    }

    #[test]
    fn monte_carlo_matches_exact_on_star_model() {
        let scm = presets::star_scm(0.25);
        let family = presets::star_family();
        let table = |x: &[f64]| -> f64 {
            let p = 0.25;
            match (x[0] as i64, x[1] as i64) {
                (0, 0) => 0.0,
                (1, 0) => 1.0,
                (0, 1) => p,
                _ => 1.0 - p,
            }
        };
        let wrapped = crate::predictors::FnPredictor(table);
        let f = GamePredictor::General(&wrapped);
        let outcome = follower_grid_response(
            &scm,
            &family,
            &f,
            "four-point",
            &FollowerObjective::LeaderRisk { loss: Loss::Brier },
            Loss::Brier,
            1.0,
            100_000,
            false,
            11,
        )
        .unwrap();
        assert!(outcome.best_labels.contains(&"q1".to_string()));
        assert!((outcome.leader_risk - 0.1875).abs() < 0.01);
    }

    #[test]
    fn worst_case_over_derived_family() {
        let (scm, family) = presets::strict_b2_scm();
        let f = AffinePredictor::new(vec![0, 1], vec![1.0 / 3.0, -1.0 / 3.0], 0.0);
        let (worst, table) = worst_case_risk(
            &scm,
            &family,
            &GamePredictor::Affine(&f),
            Loss::Squared,
            Backend::Analytic,
        )
        .unwrap();
        assert_eq!(table.len(), 4);
        assert!((worst - (1.0 + 6.0 / 9.0)).abs() < 1e-12, "worst = {worst}");

        let sb = AffinePredictor::constant(0.0);
        let (worst_sb, _) = worst_case_risk(
            &scm,
            &family,
            &GamePredictor::Affine(&sb),
            Loss::Squared,
            Backend::Analytic,
        )
        .unwrap();
        assert!((worst_sb - 1.0).abs() < 1e-12);
        assert!(worst > worst_sb);
    }

    #[test]
    fn single_env_worst_case_is_that_risk() {
        let (scm, _) = presets::fig2_linear_scm();
        let family = EnvironmentFamily::new(vec![Environment::base("only")]).unwrap();
        let f = AffinePredictor::constant(0.0);
        let (worst, table) = worst_case_risk(
            &scm,
            &family,
            &GamePredictor::Affine(&f),
            Loss::Squared,
            Backend::Analytic,
        )
        .unwrap();
        assert_eq!(table.len(), 1);
        assert!((worst - table[0].risk).abs() < 1e-15);
    }

    #[test]
    fn perturbation_with_zero_bound_cannot_move() {
        let (scm, family) = presets::fig2_linear_scm();
        let dag = scm.dag().clone();
        let view = LinearScmView::from_scm(&scm, &family).unwrap();
        let pa = view
            .population_regression(
                "obs",
                &crate::graph::relatives(&dag, "Y", crate::graph::RelativeKind::Parents)
                    .unwrap(),
                &dag,
            )
            .unwrap();
        let specs = vec![PolicySpec::constant("X1"), PolicySpec::constant("X4")];
        let config = EsConfig {
            population: 4,
            iterations: 10,
            restarts: 1,
            batch: 128,
            heldout: 2000,
            eval: 20_000,
            sigma0: 0.5,
        };
        let (_, outcome) = follower_perturbation_response(
            &scm,
            &GamePredictor::Affine(&pa),
            "pa",
            &specs,
            &FollowerObjective::LeaderRisk { loss: Loss::Squared },
            Loss::Squared,
            0.0,
            &config,
            5,
        )
        .unwrap();
        // Base risk of the parent predictor is 0.16.
        assert!((outcome.leader_risk - 0.16).abs() < 4.0 * outcome.leader_risk_se + 0.01);
    }
}
