//! Scenario files: strict JSON schema, parameter substitution, and the
//! build step into core types.

use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::Value;

use pig_core::game::{EsConfig, FollowerObjective, PolicySpec};
use pig_core::gaussian::AffinePredictor;
use pig_core::graph::{self, AugmentationSpec, Dag, DagSpec, NodeSet, RelativeKind};
use pig_core::invariance::TestKind;
use pig_core::learn::Screening;
use pig_core::predictors::{LearnerConfig, LearnerKind, Loss};
use pig_core::scm::expr::CompiledExpr;
use pig_core::scm::{
    Environment, EnvironmentFamily, Expr, Mechanism, NoiseDist, PerturbationPolicy,
    PolicyInput, PolicyShape, Scm, Task,
};

use crate::error::{CliError, CliResult};
use crate::expr_json::parse_expr;

// ---------------------------------------------------------------------------
// Raw schema
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub task: Task,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub dag: Option<DagSpec>,
    #[serde(default)]
    pub mechanisms: BTreeMap<String, MechanismSpec>,
    #[serde(default)]
    pub environments: Option<EnvironmentsSpec>,
    #[serde(default)]
    pub leaders: Vec<LeaderSpec>,
    #[serde(default)]
    pub follower: Option<FollowerSpec>,
    pub replication: ReplicationSpec,
    #[serde(default = "default_loss")]
    pub loss: Loss,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default)]
    pub outputs: OutputsSpec,
    /// Present for oracle-sweep scenarios instead of a game definition.
    #[serde(default)]
    pub oracle_sweep: Option<SweepSpec>,
}

fn default_loss() -> Loss {
    Loss::Squared
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Risk,
    Accuracy,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MechanismSpec {
    Linear {
        #[serde(default)]
        parents: Vec<(String, f64)>,
        #[serde(default)]
        intercept: f64,
        noise_std: f64,
    },
    Expression {
        #[serde(default)]
        parents: Vec<String>,
        expr: Value,
        noise: NoiseSpec,
    },
    Table {
        #[serde(default)]
        parents: Vec<(String, usize)>,
        states: usize,
        rows: Vec<Vec<f64>>,
    },
    Point {
        value: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseSpec {
    Gaussian([f64; 2]),
    Uniform([f64; 2]),
    Bernoulli(f64),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentsSpec {
    pub list: Vec<EnvSpec>,
    #[serde(default)]
    pub training: Vec<String>,
    #[serde(default)]
    pub reference: Option<String>,
    #[serde(default)]
    pub param_scale: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub label: String,
    #[serde(default)]
    pub overrides: BTreeMap<String, OverrideSpec>,
    #[serde(default)]
    pub params: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum OverrideSpec {
    /// Constant additive shift of the base mechanism.
    Shift { shift: f64 },
    Mechanism(MechanismSpec),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderSpec {
    pub id: String,
    #[serde(default)]
    pub subset: Option<SubsetRuleSpec>,
    #[serde(default)]
    pub learner: Option<LearnerSpec>,
    #[serde(default)]
    pub fixed: Option<FixedSpec>,
    #[serde(default)]
    pub learn: Option<LearnOptions>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetRuleSpec {
    pub rule: String,
    #[serde(default)]
    pub columns: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LearnerSpec {
    /// Closed-form population predictor (linear view or exact enumeration).
    Population,
    Ols,
    Ridge {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    Logistic,
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_steps")]
        max_steps: usize,
    },
    Stumps {
        #[serde(default = "default_trees")]
        trees: usize,
        #[serde(default = "default_depth")]
        depth: usize,
    },
}

fn default_lambda() -> f64 {
    1e-6
}
fn default_hidden() -> Vec<usize> {
    vec![64, 64, 64]
}
fn default_steps() -> usize {
    2500
}
fn default_trees() -> usize {
    50
}
fn default_depth() -> usize {
    3
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum FixedSpec {
    Affine {
        #[serde(default)]
        weights: BTreeMap<String, f64>,
        #[serde(default)]
        intercept: f64,
    },
    /// Prefix-notation expression over covariate labels.
    Expr(Value),
    Constant(f64),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnOptions {
    #[serde(default = "default_alpha")]
    pub alpha_inv: f64,
    #[serde(default = "default_alpha")]
    pub alpha_pred: f64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_test")]
    pub test: TestKind,
    #[serde(default)]
    pub screen: Option<String>,
    #[serde(default)]
    pub max_subset_size: Option<usize>,
}

fn default_alpha() -> f64 {
    0.05
}
fn default_bootstrap() -> usize {
    250
}
fn default_test() -> TestKind {
    TestKind::Gcm
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions {
            alpha_inv: default_alpha(),
            alpha_pred: default_alpha(),
            bootstrap: default_bootstrap(),
            test: default_test(),
            screen: None,
            max_subset_size: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowerSpec {
    pub objective: ObjectiveSpec,
    pub mode: ModeSpec,
    pub bounds: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    LeaderRisk,
    MeanPrediction {
        #[serde(default = "default_sign")]
        sign: f64,
        #[serde(default)]
        alpha: f64,
        #[serde(default = "default_beta")]
        beta: f64,
    },
    AffineMinusCost {
        #[serde(default)]
        alpha: f64,
        #[serde(default = "default_beta")]
        beta: f64,
        costs: Vec<Value>,
    },
}

fn default_sign() -> f64 {
    1.0
}
fn default_beta() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModeSpec {
    Grid {
        #[serde(default = "default_n_query")]
        n_query: usize,
        #[serde(default)]
        exact: bool,
    },
    Perturbation {
        targets: Vec<TargetSpec>,
        #[serde(default)]
        optimizer: Option<OptimizerSpec>,
    },
}

fn default_n_query() -> usize {
    10_000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub node: String,
    /// Node labels, or the string `"noise"` for the node's own noise draw.
    #[serde(default)]
    pub inputs: Vec<String>,
    pub shape: ShapeSpec,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ShapeSpec {
    Constant,
    Net { hidden: Vec<usize> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    #[serde(default = "d_population")]
    pub population: usize,
    #[serde(default = "d_iterations")]
    pub iterations: usize,
    #[serde(default = "d_restarts")]
    pub restarts: usize,
    #[serde(default = "d_batch")]
    pub batch: usize,
    #[serde(default = "d_heldout")]
    pub heldout: usize,
    #[serde(default = "d_eval")]
    pub eval: usize,
}

fn d_population() -> usize {
    16
}
fn d_iterations() -> usize {
    300
}
fn d_restarts() -> usize {
    5
}
fn d_batch() -> usize {
    512
}
fn d_heldout() -> usize {
    10_000
}
fn d_eval() -> usize {
    10_000
}

impl From<&OptimizerSpec> for EsConfig {
    fn from(o: &OptimizerSpec) -> Self {
        EsConfig {
            population: o.population,
            iterations: o.iterations,
            restarts: o.restarts,
            batch: o.batch,
            heldout: o.heldout,
            eval: o.eval,
            sigma0: 0.5,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicationSpec {
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub n_train: Option<usize>,
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    #[serde(default)]
    pub train_sizes: Option<Vec<usize>>,
}

fn default_n_eval() -> usize {
    10_000
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputsSpec {
    #[serde(default = "default_true")]
    pub csv: bool,
    #[serde(default)]
    pub svg: bool,
    #[serde(default)]
    pub learn_report: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SweepSpec {
    /// Worst-case optimality of the stable blanket on random linear models.
    WorstCaseOptimality {
        #[serde(default = "d_scms")]
        scms: usize,
        #[serde(default = "d_predictors")]
        predictors: usize,
    },
}

fn d_scms() -> usize {
    20
}
fn d_predictors() -> usize {
    100
}

// ---------------------------------------------------------------------------
// Parsing with parameter substitution
// ---------------------------------------------------------------------------

/// Replaces `"$name"` strings with numbers from `params` everywhere except
/// inside the top-level `params` object itself.
fn substitute(value: &mut Value, params: &BTreeMap<String, f64>) -> CliResult<()> {
    match value {
        Value::String(s) if s.starts_with('$') => {
            // `$name` substitutes the parameter; `$~name` its complement
            // `1 - name` (handy for probability tables).
            let (key, complement) = match s.strip_prefix("$~") {
                Some(k) => (k, true),
                None => (&s[1..], false),
            };
            let raw = *params.get(key).ok_or_else(|| {
                CliError::Schema(format!("unknown parameter `${key}`"))
            })?;
            let replacement = if complement { 1.0 - raw } else { raw };
            *value = serde_json::json!(replacement);
            Ok(())
        }
        Value::Array(items) => {
            // Expression arrays start with an operator string; leave the
            // head alone so operators like "$..." never collide.
            for item in items.iter_mut() {
                substitute(item, params)?;
            }
            Ok(())
        }
        Value::Object(map) => {
            for (_, v) in map.iter_mut() {
                substitute(v, params)?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Parses scenario text: syntax errors exit 2, schema errors exit 3.
/// `overrides` replace file-level parameter defaults before substitution.
pub fn parse_scenario_text(
    text: &str,
    overrides: &[(String, f64)],
) -> CliResult<ScenarioSpec> {
    let mut value: Value =
        serde_json::from_str(text).map_err(|e| CliError::Syntax(e.to_string()))?;
    let mut params: BTreeMap<String, f64> = BTreeMap::new();
    if let Some(obj) = value.as_object() {
        if let Some(p) = obj.get("params") {
            params = serde_json::from_value(p.clone())
                .map_err(|e| CliError::Schema(format!("bad params block: {e}")))?;
        }
    }
    for (k, v) in overrides {
        if !params.contains_key(k) {
            return Err(CliError::Schema(format!(
                "scenario has no parameter `{k}` to override"
            )));
        }
        params.insert(k.clone(), *v);
    }
    if let Some(obj) = value.as_object_mut() {
        for (key, v) in obj.iter_mut() {
            if key != "params" {
                substitute(v, &params)?;
            }
        }
        if let Some(p) = obj.get_mut("params") {
            *p = serde_json::to_value(&params).expect("params serialize");
        }
    }
    let spec: ScenarioSpec =
        serde_json::from_value(value).map_err(|e| CliError::Schema(e.to_string()))?;
    validate_shape(&spec)?;
    Ok(spec)
}

fn validate_shape(spec: &ScenarioSpec) -> CliResult<()> {
    if spec.oracle_sweep.is_some() {
        return Ok(());
    }
    let envs = spec
        .environments
        .as_ref()
        .ok_or_else(|| CliError::Schema("game scenarios need an environments block".into()))?;
    if envs.list.is_empty() {
        return Err(CliError::Schema("environments list must be nonempty".into()));
    }
    if spec.dag.is_none() {
        return Err(CliError::Schema("game scenarios need a dag".into()));
    }
    if spec.leaders.is_empty() {
        return Err(CliError::Schema("at least one leader is required".into()));
    }
    let follower = spec
        .follower
        .as_ref()
        .ok_or_else(|| CliError::Schema("game scenarios need a follower".into()))?;
    if follower.bounds.is_empty() {
        return Err(CliError::Schema("bound grid must be nonempty".into()));
    }
    if follower.bounds.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return Err(CliError::Schema("bounds must lie in [0, 1]".into()));
    }
    if spec.replication.reps == 0 {
        return Err(CliError::Schema("reps must be >= 1".into()));
    }
    for leader in &spec.leaders {
        match (&leader.subset, &leader.fixed) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(CliError::Schema(format!(
                    "leader `{}` needs exactly one of `subset` or `fixed`",
                    leader.id
                )))
            }
            _ => {}
        }
        if let Some(rule) = &leader.subset {
            let known = ["pa", "sb", "all", "explicit", "learned-imp", "learned-sc"];
            if !known.contains(&rule.rule.as_str()) {
                return Err(CliError::Schema(format!(
                    "unknown subset rule `{}`",
                    rule.rule
                )));
            }
            if rule.rule == "explicit" && rule.columns.is_empty() {
                return Err(CliError::Schema(
                    "explicit subsets need a columns list".into(),
                ));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Building core objects
// ---------------------------------------------------------------------------

/// A leader resolved against the DAG.
pub enum LeaderKind {
    Rule {
        columns: Vec<usize>,
        learner: Option<LearnerConfig>,
        population: bool,
    },
    Learned {
        imp: bool,
        options: LearnOptions,
        learner: Option<LearnerConfig>,
    },
    FixedAffine(AffinePredictor),
    FixedExpr(CompiledExpr),
    FixedConstant(f64),
}

pub struct LeaderDef {
    pub id: String,
    pub kind: LeaderKind,
}

pub enum FollowerMode {
    Grid { n_query: usize, exact: bool },
    Perturbation { specs: Vec<PolicySpec>, es: EsConfig },
}

pub struct FollowerDef {
    pub objective: FollowerObjective,
    pub mode: FollowerMode,
    pub bounds: Vec<f64>,
}

/// A fully built scenario.
pub struct Scenario {
    pub name: String,
    pub task: Task,
    pub scm: Scm,
    pub family: EnvironmentFamily,
    pub leaders: Vec<LeaderDef>,
    pub follower: Option<FollowerDef>,
    pub replication: ReplicationSpec,
    pub loss: Loss,
    pub metric: Metric,
    pub outputs: OutputsSpec,
    pub oracle_sweep: Option<SweepSpec>,
    pub seed: u64,
}

fn build_noise(spec: &NoiseSpec) -> NoiseDist {
    match spec {
        NoiseSpec::Gaussian([mean, std]) => NoiseDist::Gaussian {
            mean: *mean,
            std: *std,
        },
        NoiseSpec::Uniform([lo, hi]) => NoiseDist::Uniform { lo: *lo, hi: *hi },
        NoiseSpec::Bernoulli(p) => NoiseDist::Bernoulli { p: *p },
    }
}

fn build_mechanism(spec: &MechanismSpec) -> CliResult<Mechanism> {
    Ok(match spec {
        MechanismSpec::Linear {
            parents,
            intercept,
            noise_std,
        } => Mechanism::LinearGaussian {
            parents: parents.iter().map(|(p, _)| p.clone()).collect(),
            coefficients: parents.iter().map(|(_, c)| *c).collect(),
            intercept: *intercept,
            noise_std: *noise_std,
        },
        MechanismSpec::Expression {
            parents,
            expr,
            noise,
        } => {
            let parsed = parse_expr(expr).map_err(CliError::Schema)?;
            Mechanism::Expression {
                parents: parents.clone(),
                expr: parsed,
                noise: build_noise(noise),
            }
        }
        MechanismSpec::Table {
            parents,
            states,
            rows,
        } => Mechanism::DiscreteTable {
            parents: parents.iter().map(|(p, _)| p.clone()).collect(),
            parent_cards: parents.iter().map(|(_, c)| *c).collect(),
            states: *states,
            table: rows.clone(),
        },
        MechanismSpec::Point { value } => Mechanism::PointMass { value: *value },
    })
}

fn build_override(
    scm_mechanisms: &BTreeMap<String, Mechanism>,
    node: &str,
    spec: &OverrideSpec,
) -> CliResult<Mechanism> {
    match spec {
        OverrideSpec::Mechanism(m) => build_mechanism(m),
        OverrideSpec::Shift { shift } => {
            let base = scm_mechanisms.get(node).ok_or_else(|| {
                CliError::Semantic(format!("shift override targets unknown node `{node}`"))
            })?;
            Ok(Mechanism::Perturbed {
                base: Box::new(base.clone()),
                policy: PerturbationPolicy::constant(node, shift.abs(), *shift),
            })
        }
    }
}

fn resolve_subset(dag: &Dag, rule: &SubsetRuleSpec) -> CliResult<Vec<usize>> {
    let set: NodeSet = match rule.rule.as_str() {
        "pa" => relative_parents(dag)?,
        "sb" => graph::stable_blanket(dag),
        "all" => NodeSet::from_ids(dag, dag.covariates().iter().copied())
            .map_err(CliError::from)?,
        "explicit" => {
            NodeSet::from_labels(dag, &rule.columns).map_err(CliError::from)?
        }
        other => {
            return Err(CliError::Schema(format!(
                "rule `{other}` does not resolve to a fixed subset"
            )))
        }
    };
    Ok(set
        .iter()
        .map(|id| dag.covariate_index(id).expect("covariate"))
        .collect())
}

fn relative_parents(dag: &Dag) -> CliResult<NodeSet> {
    graph::relatives(dag, dag.label(dag.response()), RelativeKind::Parents)
        .map_err(CliError::from)
}

fn build_learner(spec: &LearnerSpec, task: Task) -> Option<LearnerConfig> {
    let kind = match spec {
        LearnerSpec::Population => return None,
        LearnerSpec::Ols => LearnerKind::Ols,
        LearnerSpec::Ridge { lambda } => LearnerKind::Ridge { lambda: *lambda },
        LearnerSpec::Logistic => LearnerKind::Logistic,
        LearnerSpec::Mlp { hidden, max_steps } => LearnerKind::Mlp {
            hidden: hidden.clone(),
            max_steps: *max_steps,
        },
        LearnerSpec::Stumps { trees, depth } => LearnerKind::Stumps {
            trees: *trees,
            depth: *depth,
        },
    };
    let _ = task;
    Some(LearnerConfig { kind, seed: 0 })
}

pub fn parse_screening(text: &str) -> CliResult<Screening> {
    if text == "none" {
        return Ok(Screening::None);
    }
    if let Some(k) = text.strip_prefix("l1:") {
        let k: usize = k
            .parse()
            .map_err(|_| CliError::Schema(format!("bad screening spec `{text}`")))?;
        return Ok(Screening::L1 { k });
    }
    Err(CliError::Schema(format!("bad screening spec `{text}`")))
}

/// Builds core objects; semantic violations exit 4.
pub fn build_scenario(spec: ScenarioSpec) -> CliResult<Scenario> {
    if let Some(sweep) = &spec.oracle_sweep {
        return Ok(Scenario {
            name: spec.name,
            task: spec.task,
            scm: placeholder_scm()?,
            family: EnvironmentFamily::new(vec![Environment::base("obs")])
                .map_err(CliError::from)?,
            leaders: Vec::new(),
            follower: None,
            replication: spec.replication,
            loss: spec.loss,
            metric: spec.metric,
            outputs: spec.outputs,
            oracle_sweep: Some(sweep.clone()),
            seed: 0,
        });
    }
    let dag_spec = spec.dag.as_ref().expect("validated");
    let (dag, actions) = dag_spec.build().map_err(CliError::from)?;

    let mut mechanisms: BTreeMap<String, Mechanism> = BTreeMap::new();
    for (node, m) in &spec.mechanisms {
        mechanisms.insert(node.clone(), build_mechanism(m)?);
    }
    let mech_refs: Vec<(&str, Mechanism)> = mechanisms
        .iter()
        .map(|(l, m)| (l.as_str(), m.clone()))
        .collect();
    let scm = build_scm(dag, mech_refs, spec.task, actions)?;

    let envs_spec = spec.environments.as_ref().expect("validated");
    let mut envs = Vec::new();
    for e in &envs_spec.list {
        let mut env = Environment::base(&e.label);
        for (node, o) in &e.overrides {
            env.overrides
                .insert(node.clone(), build_override(&mechanisms, node, o)?);
        }
        env.params = e.params.clone();
        envs.push(env);
    }
    let mut family = EnvironmentFamily::new(envs).map_err(CliError::from)?;
    if !envs_spec.training.is_empty() {
        let refs: Vec<&str> = envs_spec.training.iter().map(|s| s.as_str()).collect();
        family = family.with_training(&refs).map_err(CliError::from)?;
    }
    if let Some(r) = &envs_spec.reference {
        family = family.with_reference(r).map_err(CliError::from)?;
    }
    family.param_scale = envs_spec.param_scale.clone();
    scm.validate_family(&family).map_err(CliError::from)?;

    let dag = scm.dag();
    let columns: Vec<String> = dag
        .covariates()
        .iter()
        .map(|&c| dag.label(c).to_string())
        .collect();

    let mut leaders = Vec::new();
    for l in &spec.leaders {
        let kind = if let Some(fixed) = &l.fixed {
            match fixed {
                FixedSpec::Affine { weights, intercept } => {
                    let mut cols = Vec::new();
                    let mut w = Vec::new();
                    for (label, weight) in weights {
                        let idx = columns
                            .iter()
                            .position(|c| c == label)
                            .ok_or_else(|| {
                                CliError::Semantic(format!("unknown covariate `{label}`"))
                            })?;
                        cols.push(idx);
                        w.push(*weight);
                    }
                    LeaderKind::FixedAffine(AffinePredictor::new(cols, w, *intercept))
                }
                FixedSpec::Expr(v) => {
                    let expr: Expr = parse_expr(v).map_err(CliError::Schema)?;
                    let compiled = expr.compile(&columns).map_err(CliError::from)?;
                    LeaderKind::FixedExpr(compiled)
                }
                FixedSpec::Constant(v) => LeaderKind::FixedConstant(*v),
            }
        } else {
            let rule = l.subset.as_ref().expect("validated");
            let learner = l
                .learner
                .as_ref()
                .map(|s| build_learner(s, spec.task))
                .unwrap_or(Some(LearnerConfig::default_for(spec.task)));
            match rule.rule.as_str() {
                "learned-imp" | "learned-sc" => LeaderKind::Learned {
                    imp: rule.rule == "learned-imp",
                    options: l.learn.as_ref().map_or_else(LearnOptions::default, |o| {
                        LearnOptions {
                            alpha_inv: o.alpha_inv,
                            alpha_pred: o.alpha_pred,
                            bootstrap: o.bootstrap,
                            test: o.test,
                            screen: o.screen.clone(),
                            max_subset_size: o.max_subset_size,
                        }
                    }),
                    learner,
                },
                _ => LeaderKind::Rule {
                    columns: resolve_subset(dag, rule)?,
                    population: learner.is_none(),
                    learner,
                },
            }
        };
        leaders.push(LeaderDef {
            id: l.id.clone(),
            kind,
        });
    }

    let follower_spec = spec.follower.as_ref().expect("validated");
    let objective = match &follower_spec.objective {
        ObjectiveSpec::LeaderRisk => FollowerObjective::LeaderRisk { loss: spec.loss },
        ObjectiveSpec::MeanPrediction { sign, alpha, beta } => {
            FollowerObjective::MeanPrediction {
                sign: *sign,
                alpha: *alpha,
                beta: *beta,
            }
        }
        ObjectiveSpec::AffineMinusCost { alpha, beta, costs } => {
            if costs.len() != family.len() {
                return Err(CliError::Schema(
                    "cost list must have one entry per environment".into(),
                ));
            }
            let compiled = costs
                .iter()
                .map(|v| {
                    parse_expr(v)
                        .map_err(CliError::Schema)
                        .and_then(|e| e.compile(&columns).map_err(CliError::from))
                })
                .collect::<CliResult<Vec<_>>>()?;
            FollowerObjective::AffinePredMinusCost {
                alpha: *alpha,
                beta: *beta,
                costs: compiled,
            }
        }
    };
    let mode = match &follower_spec.mode {
        ModeSpec::Grid { n_query, exact } => FollowerMode::Grid {
            n_query: *n_query,
            exact: *exact,
        },
        ModeSpec::Perturbation { targets, optimizer } => {
            let mut specs = Vec::new();
            for t in targets {
                let inputs: Vec<PolicyInput> = t
                    .inputs
                    .iter()
                    .map(|i| {
                        if i == "noise" {
                            PolicyInput::OwnNoise
                        } else {
                            PolicyInput::Node(i.clone())
                        }
                    })
                    .collect();
                let shape = match &t.shape {
                    ShapeSpec::Constant => PolicyShape::Constant,
                    ShapeSpec::Net { hidden } => PolicyShape::Net {
                        hidden: hidden.clone(),
                    },
                };
                let blueprint = PolicySpec {
                    target: t.node.clone(),
                    inputs,
                    shape,
                };
                // Semantic validation against the SCM's action sets.
                let probe = PerturbationPolicy {
                    target: blueprint.target.clone(),
                    inputs: blueprint.inputs.clone(),
                    bound: 0.0,
                    shape: blueprint.shape.clone(),
                    params: vec![
                        0.0;
                        PerturbationPolicy::param_count_for(
                            &blueprint.shape,
                            blueprint.inputs.len()
                        )
                    ],
                };
                probe.validate_against(&scm).map_err(CliError::from)?;
                specs.push(blueprint);
            }
            FollowerMode::Perturbation {
                specs,
                es: optimizer.as_ref().map(EsConfig::from).unwrap_or_default(),
            }
        }
    };

    let seed = spec.replication.seed;
    Ok(Scenario {
        name: spec.name,
        task: spec.task,
        scm,
        family,
        leaders,
        follower: Some(FollowerDef {
            objective,
            mode,
            bounds: follower_spec.bounds.clone(),
        }),
        replication: spec.replication,
        loss: spec.loss,
        metric: spec.metric,
        outputs: spec.outputs,
        oracle_sweep: None,
        seed,
    })
}

fn build_scm(
    dag: Dag,
    mechanisms: Vec<(&str, Mechanism)>,
    task: Task,
    actions: AugmentationSpec,
) -> CliResult<Scm> {
    Scm::with_actions(dag, mechanisms, task, actions).map_err(CliError::from)
}

fn placeholder_scm() -> CliResult<Scm> {
    let dag = Dag::new(&["X1", "Y", "E"], &[("X1", "Y")], "Y", "E").map_err(CliError::from)?;
    Scm::new(
        dag,
        vec![
            ("X1", Mechanism::linear(&[], 0.0, 1.0)),
            ("Y", Mechanism::linear(&[("X1", 1.0)], 0.0, 1.0)),
        ],
        Task::Regression,
    )
    .map_err(CliError::from)
}

/// Loads and builds a scenario from a path or a registry name.
pub fn load_scenario(
    source: &str,
    overrides: &[(String, f64)],
) -> CliResult<Scenario> {
    let text = if let Some(body) = crate::registry::builtin(source) {
        body.to_string()
    } else {
        std::fs::read_to_string(source)
            .map_err(|e| CliError::Other(format!("cannot read `{source}`: {e}")))?
    };
    let spec = parse_scenario_text(&text, overrides)?;
    build_scenario(spec)
}
