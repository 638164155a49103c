//! Structural causal models with environment-indexed mechanism overrides.

pub mod dataset;
pub mod enumerate;
pub mod expr;
pub mod policy;
pub mod sample;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{validate_augmentation, AugmentationSpec, Dag};

pub use dataset::Dataset;
pub use enumerate::{enumerate_discrete, JointTable};
pub use expr::{CompiledExpr, Expr};
pub use policy::{make_perturbed_env, PerturbationPolicy, PolicyInput, PolicyShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

/// Noise law for a structural assignment.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseDist {
    Gaussian { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
    Bernoulli { p: f64 },
}

impl NoiseDist {
    pub fn standard_gaussian() -> Self {
        NoiseDist::Gaussian { mean: 0.0, std: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseDist::Gaussian { std, .. } if *std < 0.0 => {
                Err(Error::validation("gaussian noise std must be >= 0"))
            }
            NoiseDist::Uniform { lo, hi } if lo > hi => {
                Err(Error::validation("uniform noise needs lo <= hi"))
            }
            NoiseDist::Bernoulli { p } if !(0.0..=1.0).contains(p) => {
                Err(Error::validation("bernoulli noise needs p in [0,1]"))
            }
            _ => Ok(()),
        }
    }
}

/// A structural assignment for one node.
#[derive(Debug, Clone)]
pub enum Mechanism {
    /// `x = sum_k coeff_k * parent_k + intercept + noise_std * eps`, eps standard normal.
    LinearGaussian {
        parents: Vec<String>,
        coefficients: Vec<f64>,
        intercept: f64,
        noise_std: f64,
    },
    /// An expression over the declared parents and one noise symbol.
    Expression {
        parents: Vec<String>,
        expr: Expr,
        noise: NoiseDist,
    },
    /// Conditional probability table over discrete parents.
    ///
    /// Rows are indexed by the parent configuration in mixed radix with the
    /// FIRST declared parent as the most significant digit; each row gives
    /// the probabilities of the child states `0..states`.
    DiscreteTable {
        parents: Vec<String>,
        parent_cards: Vec<usize>,
        states: usize,
        table: Vec<Vec<f64>>,
    },
    /// A constant.
    PointMass { value: f64 },
    /// A base assignment plus a bounded perturbation policy.
    Perturbed {
        base: Box<Mechanism>,
        policy: PerturbationPolicy,
    },
}

impl Mechanism {
    pub fn linear(parents: &[(&str, f64)], intercept: f64, noise_std: f64) -> Self {
        Mechanism::LinearGaussian {
            parents: parents.iter().map(|(p, _)| p.to_string()).collect(),
            coefficients: parents.iter().map(|(_, c)| *c).collect(),
            intercept,
            noise_std,
        }
    }

    pub fn expression(parents: &[&str], expr: Expr, noise: NoiseDist) -> Self {
        Mechanism::Expression {
            parents: parents.iter().map(|p| p.to_string()).collect(),
            expr,
            noise,
        }
    }

    pub fn table(parents: &[(&str, usize)], states: usize, table: Vec<Vec<f64>>) -> Self {
        Mechanism::DiscreteTable {
            parents: parents.iter().map(|(p, _)| p.to_string()).collect(),
            parent_cards: parents.iter().map(|(_, c)| *c).collect(),
            states,
            table,
        }
    }

    /// A Bernoulli draw with no parents.
    pub fn bernoulli(p: f64) -> Self {
        Mechanism::DiscreteTable {
            parents: Vec::new(),
            parent_cards: Vec::new(),
            states: 2,
            table: vec![vec![1.0 - p, p]],
        }
    }

    /// Declared parent labels in assignment order.
    pub fn parents(&self) -> &[String] {
        match self {
            Mechanism::LinearGaussian { parents, .. } => parents,
            Mechanism::Expression { parents, .. } => parents,
            Mechanism::DiscreteTable { parents, .. } => parents,
            Mechanism::PointMass { .. } => &[],
            Mechanism::Perturbed { base, .. } => base.parents(),
        }
    }

    /// All node labels the mechanism reads: declared parents plus policy inputs.
    pub fn input_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.parents().to_vec();
        if let Mechanism::Perturbed { policy, .. } = self {
            for input in &policy.inputs {
                if let PolicyInput::Node(l) = input {
                    labels.push(l.clone());
                }
            }
        }
        labels.sort();
        labels.dedup();
        labels
    }

    pub fn is_discrete(&self) -> bool {
        matches!(
            self,
            Mechanism::DiscreteTable { .. } | Mechanism::PointMass { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Mechanism::LinearGaussian {
                parents,
                coefficients,
                noise_std,
                ..
            } => {
                if parents.len() != coefficients.len() {
                    return Err(Error::validation(
                        "linear mechanism needs one coefficient per parent",
                    ));
                }
                if *noise_std < 0.0 {
                    return Err(Error::validation("noise std must be >= 0"));
                }
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::validation("non-finite coefficient"));
                }
                Ok(())
            }
            Mechanism::Expression { parents, expr, noise } => {
                noise.validate()?;
                // Compilation checks that only declared parents are referenced.
                expr.compile(parents).map(|_| ())
            }
            Mechanism::DiscreteTable {
                parents,
                parent_cards,
                states,
                table,
            } => {
                if parents.len() != parent_cards.len() {
                    return Err(Error::validation("parent_cards must match parents"));
                }
                if *states < 1 {
                    return Err(Error::validation("table needs at least one state"));
                }
                let rows: usize = parent_cards.iter().product();
                if table.len() != rows {
                    return Err(Error::validation(format!(
                        "table has {} rows, expected {rows}",
                        table.len()
                    )));
                }
                for row in table {
                    if row.len() != *states {
                        return Err(Error::validation("table row length must equal states"));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > 1e-12 || row.iter().any(|p| *p < 0.0) {
                        return Err(Error::validation(
                            "table rows must be probability vectors summing to 1",
                        ));
                    }
                }
                Ok(())
            }
            Mechanism::PointMass { value } => {
                if value.is_finite() {
                    Ok(())
                } else {
                    Err(Error::validation("point mass must be finite"))
                }
            }
            Mechanism::Perturbed { base, policy } => {
                base.validate()?;
                policy.validate_shape()
            }
        }
    }
}

/// One environment: a label plus mechanism overrides for children of `E`.
#[derive(Debug, Clone)]
pub struct Environment {
    pub label: String,
    pub overrides: BTreeMap<String, Mechanism>,
    /// Parameter vector used for distance ordering in grid games.
    pub params: Option<Vec<f64>>,
}

impl Environment {
    pub fn base(label: &str) -> Self {
        Environment {
            label: label.to_string(),
            overrides: BTreeMap::new(),
            params: None,
        }
    }

    pub fn with_params(mut self, params: Vec<f64>) -> Self {
        self.params = Some(params);
        self
    }

    pub fn with_override(mut self, node: &str, mech: Mechanism) -> Self {
        self.overrides.insert(node.to_string(), mech);
        self
    }
}

/// An ordered family of environments with designated training labels and an
/// optional reference environment.
#[derive(Debug, Clone)]
pub struct EnvironmentFamily {
    environments: Vec<Environment>,
    training: Vec<usize>,
    reference: Option<usize>,
    /// Per-component normalization for the distance ordering.
    pub param_scale: Option<Vec<f64>>,
}

impl EnvironmentFamily {
    pub fn new(environments: Vec<Environment>) -> Result<Self> {
        if environments.is_empty() {
            return Err(Error::input("environment family must be nonempty"));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &environments {
            if !seen.insert(e.label.clone()) {
                return Err(Error::validation(format!(
                    "duplicate environment label `{}`",
                    e.label
                )));
            }
        }
        Ok(EnvironmentFamily {
            environments,
            training: Vec::new(),
            reference: None,
            param_scale: None,
        })
    }

    pub fn with_training(mut self, labels: &[&str]) -> Result<Self> {
        self.training = labels
            .iter()
            .map(|l| self.index_of(l))
            .collect::<Result<Vec<_>>>()?;
        Ok(self)
    }

    pub fn with_reference(mut self, label: &str) -> Result<Self> {
        self.reference = Some(self.index_of(label)?);
        Ok(self)
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.environments
            .iter()
            .position(|e| e.label == label)
            .ok_or_else(|| Error::input(format!("unknown environment `{label}`")))
    }

    pub fn len(&self) -> usize {
        self.environments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.environments.is_empty()
    }

    pub fn environments(&self) -> &[Environment] {
        &self.environments
    }

    pub fn get(&self, idx: usize) -> &Environment {
        &self.environments[idx]
    }

    pub fn training_indices(&self) -> &[usize] {
        &self.training
    }

    pub fn reference_index(&self) -> Option<usize> {
        self.reference
    }

    pub fn labels(&self) -> Vec<String> {
        self.environments.iter().map(|e| e.label.clone()).collect()
    }
}

/// A structural causal model: a DAG plus one mechanism per non-`E` node.
#[derive(Debug, Clone)]
pub struct Scm {
    dag: Dag,
    mechanisms: BTreeMap<usize, Mechanism>,
    task: Task,
    /// Action sets constraining what overrides may read.
    actions: AugmentationSpec,
    /// Topological order of the maximal augmented graph, E excluded; valid
    /// for sampling any admissible environment.
    sample_order: Vec<usize>,
}

impl Scm {
    pub fn new(dag: Dag, mechanisms: Vec<(&str, Mechanism)>, task: Task) -> Result<Self> {
        Self::with_actions(dag, mechanisms, task, AugmentationSpec::new())
    }

    /// Builds an SCM whose environments may use the given action sets.
    pub fn with_actions(
        dag: Dag,
        mechanisms: Vec<(&str, Mechanism)>,
        task: Task,
        actions: AugmentationSpec,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (label, mech) in mechanisms {
            let id = dag.node_id(label)?;
            if id == dag.env() {
                return Err(Error::validation(
                    "the environment node has no mechanism; environments are external labels",
                ));
            }
            mech.validate()?;
            // Declared parents must equal the graph parents minus E.
            let mut graph_parents: Vec<&str> = dag
                .parents_of(id)
                .iter()
                .filter(|&&p| p != dag.env())
                .map(|&p| dag.label(p))
                .collect();
            graph_parents.sort();
            let mut declared: Vec<&str> = mech.parents().iter().map(|s| s.as_str()).collect();
            declared.sort();
            declared.dedup();
            if graph_parents != declared {
                return Err(Error::validation(format!(
                    "mechanism parents for `{label}` are [{}], graph expects [{}]",
                    declared.join(","),
                    graph_parents.join(",")
                )));
            }
            if map.insert(id, mech).is_some() {
                return Err(Error::validation(format!("duplicate mechanism for `{label}`")));
            }
        }
        for &id in dag
            .topological_order()
            .iter()
            .filter(|&&id| id != dag.env())
        {
            if !map.contains_key(&id) {
                return Err(Error::validation(format!(
                    "missing mechanism for `{}`",
                    dag.label(id)
                )));
            }
        }
        let violations = validate_augmentation(&dag, &actions);
        if !violations.is_empty() {
            return Err(Error::validation(format!(
                "invalid action sets: {}",
                violations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; ")
            )));
        }
        let sample_order = {
            let chosen: BTreeMap<usize, crate::graph::NodeSet> =
                actions.iter().map(|(t, s)| (t, s.clone())).collect();
            let augmented = crate::graph::augment(&dag, &actions, &chosen)?;
            augmented
                .topological_order()
                .into_iter()
                .filter(|&id| id != dag.env())
                .collect()
        };
        Ok(Scm {
            dag,
            mechanisms: map,
            task,
            actions,
            sample_order,
        })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn actions(&self) -> &AugmentationSpec {
        &self.actions
    }

    pub fn mechanism(&self, id: usize) -> &Mechanism {
        &self.mechanisms[&id]
    }

    pub fn sample_order(&self) -> &[usize] {
        &self.sample_order
    }

    /// The mechanism in effect for `id` under an environment.
    pub fn effective_mechanism<'a>(&'a self, env: &'a Environment, id: usize) -> &'a Mechanism {
        env.overrides
            .get(self.dag.label(id))
            .unwrap_or_else(|| &self.mechanisms[&id])
    }

    /// Checks a family against this SCM: override keys must be children of
    /// `E`, and override inputs must stay within the original parents plus
    /// the node's action set.
    pub fn validate_family(&self, family: &EnvironmentFamily) -> Result<()> {
        for env in family.environments() {
            for (label, mech) in &env.overrides {
                let id = self.dag.node_id(label)?;
                if !self.dag.children_of(self.dag.env()).contains(&id) {
                    return Err(Error::validation(format!(
                        "override target `{label}` in environment `{}` is not a child of the env node",
                        env.label
                    )));
                }
                mech.validate()?;
                let mut allowed: Vec<String> = self
                    .dag
                    .parents_of(id)
                    .iter()
                    .filter(|&&p| p != self.dag.env())
                    .map(|&p| self.dag.label(p).to_string())
                    .collect();
                if let Some(set) = self.actions.action_set(id) {
                    allowed.extend(set.to_labels(&self.dag));
                }
                for input in mech.input_labels() {
                    if !allowed.contains(&input) {
                        return Err(Error::validation(format!(
                            "override for `{label}` in environment `{}` reads `{input}`, \
                             outside its parents and action set",
                            env.label
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn mechanism_parent_mismatch_is_rejected() {
        let dag = Dag::new(
            &["X1", "Y", "E"],
            &[("X1", "Y"), ("E", "X1")],
            "Y",
            "E",
        )
        .unwrap();
        let err = Scm::new(
            dag,
            vec![
                ("X1", Mechanism::linear(&[], 0.0, 1.0)),
                ("Y", Mechanism::linear(&[], 0.0, 1.0)),
            ],
            Task::Regression,
        )
        .unwrap_err();
        assert!(err.to_string().contains("mechanism parents"));
    }

    #[test]
    fn table_rows_must_sum_to_one() {
        let m = Mechanism::table(&[], 2, vec![vec![0.6, 0.5]]);
        assert!(m.validate().is_err());
    }

    #[test]
    fn family_overrides_must_target_env_children() {
        let (scm, _) = presets::fig2_linear_scm();
        let bad = EnvironmentFamily::new(vec![
            Environment::base("obs"),
            Environment::base("bad").with_override("X3", Mechanism::linear(&[], 0.0, 1.0)),
        ])
        .unwrap();
        assert!(scm.validate_family(&bad).is_err());
    }

    #[test]
    fn family_overrides_cannot_read_outside_action_sets() {
        let (scm, _) = presets::fig2_linear_scm();
        let bad = EnvironmentFamily::new(vec![Environment::base("e").with_override(
            "X1",
            Mechanism::linear(&[("X3", 1.0)], 0.0, 1.0),
        )])
        .unwrap();
        assert!(scm.validate_family(&bad).is_err());
    }

    #[test]
    fn duplicate_environment_labels_rejected() {
        let envs = vec![Environment::base("a"), Environment::base("a")];
        assert!(EnvironmentFamily::new(envs).is_err());
    }
}
