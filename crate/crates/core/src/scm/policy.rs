//! Bounded perturbation policies: additive interventions on children of `E`.
//!
//! A policy maps selected inputs (parents, action parents, the node's own
//! noise) to an additive perturbation whose magnitude is structurally capped
//! at the bound `b`: constant policies clamp, network policies squash through
//! `b * tanh`.

use crate::error::{Error, Result};
use crate::graph::Dag;

use super::{Environment, Mechanism, Scm};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyInput {
    /// A node value, available before the perturbed node is assigned.
    Node(String),
    /// The perturbed node's own exogenous noise draw.
    OwnNoise,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyShape {
    /// A single clamped level; ignores all inputs.
    Constant,
    /// A fully connected tanh network with the given hidden widths.
    Net { hidden: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationPolicy {
    pub target: String,
    pub inputs: Vec<PolicyInput>,
    pub bound: f64,
    pub shape: PolicyShape,
    pub params: Vec<f64>,
}

impl PerturbationPolicy {
    pub fn constant(target: &str, bound: f64, level: f64) -> Self {
        PerturbationPolicy {
            target: target.to_string(),
            inputs: Vec::new(),
            bound,
            shape: PolicyShape::Constant,
            params: vec![level],
        }
    }

    pub fn net(target: &str, inputs: Vec<PolicyInput>, bound: f64, hidden: Vec<usize>) -> Self {
        let shape = PolicyShape::Net { hidden };
        let n = Self::param_count_for(&shape, inputs.len());
        PerturbationPolicy {
            target: target.to_string(),
            inputs,
            bound,
            shape,
            params: vec![0.0; n],
        }
    }

    pub fn param_count(&self) -> usize {
        Self::param_count_for(&self.shape, self.inputs.len())
    }

    pub fn param_count_for(shape: &PolicyShape, n_inputs: usize) -> usize {
        match shape {
            PolicyShape::Constant => 1,
            PolicyShape::Net { hidden } => {
                let mut count = 0;
                let mut prev = n_inputs;
                for &h in hidden {
                    count += prev * h + h;
                    prev = h;
                }
                count + prev + 1
            }
        }
    }

    pub fn validate_shape(&self) -> Result<()> {
        if self.bound < 0.0 || !self.bound.is_finite() {
            return Err(Error::validation("policy bound must be finite and >= 0"));
        }
        if self.params.len() != self.param_count() {
            return Err(Error::validation(format!(
                "policy for `{}` has {} parameters, expected {}",
                self.target,
                self.params.len(),
                self.param_count()
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::validation("policy parameters must be finite"));
        }
        Ok(())
    }

    /// Evaluates the perturbation; `|output| <= bound` holds by construction.
    pub fn output(&self, inputs: &[f64]) -> f64 {
        debug_assert_eq!(inputs.len(), self.inputs.len());
        match &self.shape {
            PolicyShape::Constant => self.params[0].clamp(-self.bound, self.bound),
            PolicyShape::Net { hidden } => {
                let mut cur: Vec<f64> = inputs.to_vec();
                let mut offset = 0;
                for &h in hidden {
                    let mut next = vec![0.0; h];
                    for unit in next.iter_mut() {
                        let mut acc = 0.0;
                        for &x in &cur {
                            acc += self.params[offset] * x;
                            offset += 1;
                        }
                        acc += self.params[offset];
                        offset += 1;
                        *unit = acc.tanh();
                    }
                    cur = next;
                }
                let mut acc = 0.0;
                for &x in &cur {
                    acc += self.params[offset] * x;
                    offset += 1;
                }
                acc += self.params[offset];
                self.bound * acc.tanh()
            }
        }
    }

    /// Checks the policy's inputs against the SCM: target must be a child of
    /// `E`; node inputs must be parents or validated action parents.
    pub fn validate_against(&self, scm: &Scm) -> Result<()> {
        self.validate_shape()?;
        let dag: &Dag = scm.dag();
        let id = dag.node_id(&self.target)?;
        if !dag.children_of(dag.env()).contains(&id) {
            return Err(Error::validation(format!(
                "perturbation target `{}` is not a child of the env node",
                self.target
            )));
        }
        let mut allowed: Vec<String> = dag
            .parents_of(id)
            .iter()
            .filter(|&&p| p != dag.env())
            .map(|&p| dag.label(p).to_string())
            .collect();
        if let Some(set) = scm.actions().action_set(id) {
            allowed.extend(set.to_labels(dag));
        }
        for input in &self.inputs {
            if let PolicyInput::Node(l) = input {
                if !allowed.contains(l) {
                    return Err(Error::validation(format!(
                        "policy for `{}` reads `{l}`, outside its parents and action set",
                        self.target
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Builds an environment in which each targeted node keeps its original
/// assignment plus the policy's bounded additive output.
pub fn make_perturbed_env(
    scm: &Scm,
    label: &str,
    policies: &[PerturbationPolicy],
) -> Result<Environment> {
    let mut env = Environment::base(label);
    for policy in policies {
        policy.validate_against(scm)?;
        if env.overrides.contains_key(&policy.target) {
            return Err(Error::input(format!(
                "duplicate policy for target `{}`",
                policy.target
            )));
        }
        let id = scm.dag().node_id(&policy.target)?;
        let base = scm.mechanism(id).clone();
        if matches!(base, Mechanism::Perturbed { .. }) {
            return Err(Error::validation("cannot stack perturbations"));
        }
        env.overrides.insert(
            policy.target.clone(),
            Mechanism::Perturbed {
                base: Box::new(base),
                policy: policy.clone(),
            },
        );
    }
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn constant_policy_clamps_to_bound() {
        let p = PerturbationPolicy::constant("X1", 0.5, 2.0);
        assert_eq!(p.output(&[]), 0.5);
        let p = PerturbationPolicy::constant("X1", 0.5, -2.0);
        assert_eq!(p.output(&[]), -0.5);
        let p = PerturbationPolicy::constant("X1", 0.5, 0.25);
        assert_eq!(p.output(&[]), 0.25);
    }

    #[test]
    fn net_policy_is_bounded() {
        let mut p = PerturbationPolicy::net(
            "X1",
            vec![PolicyInput::Node("X2".into()), PolicyInput::OwnNoise],
            0.7,
            vec![4],
        );
        for (i, w) in p.params.iter_mut().enumerate() {
            *w = (i as f64 % 7.0) - 3.0;
        }
        for x in [-10.0, -1.0, 0.0, 2.0, 50.0] {
            let out = p.output(&[x, -x]);
            assert!(out.abs() <= 0.7 + 1e-12, "out = {out}");
        }
    }

    #[test]
    fn bound_zero_is_identity() {
        let p = PerturbationPolicy::net("X1", vec![PolicyInput::OwnNoise], 0.0, vec![3]);
        assert_eq!(p.output(&[1.3]), 0.0);
    }

    #[test]
    fn validates_inputs_against_action_sets() {
        let (scm, _) = presets::fig2_linear_scm();
        // X4's parents are {Y, X2}; X3 is not in any action set here.
        let p = PerturbationPolicy::net(
            "X4",
            vec![PolicyInput::Node("X3".into())],
            0.5,
            vec![2],
        );
        assert!(p.validate_against(&scm).is_err());

        let ok = PerturbationPolicy::net(
            "X4",
            vec![PolicyInput::Node("Y".into()), PolicyInput::OwnNoise],
            0.5,
            vec![2],
        );
        assert!(ok.validate_against(&scm).is_ok());
    }

    #[test]
    fn param_counts() {
        assert_eq!(
            PerturbationPolicy::param_count_for(&PolicyShape::Constant, 3),
            1
        );
        // 2 inputs -> [4] -> 1: (2*4 + 4) + (4 + 1) = 17
        assert_eq!(
            PerturbationPolicy::param_count_for(&PolicyShape::Net { hidden: vec![4] }, 2),
            17
        );
    }
}
