//! Exact joint distributions for discrete SCMs.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::{EnvironmentFamily, Mechanism, Scm};

const MAX_CONFIGS: usize = 1 << 20;

/// The exact joint distribution of all non-`E` nodes under one environment.
#[derive(Debug, Clone)]
pub struct JointTable {
    /// Node ids in evaluation order.
    node_ids: Vec<usize>,
    /// Possible values per node (state index -> value).
    supports: Vec<Vec<f64>>,
    /// Probability per configuration, mixed radix over `node_ids` with the
    /// first node as the most significant digit.
    probs: Vec<f64>,
    /// For each node position, the covariate column it maps to (None for Y).
    cov_position: Vec<Option<usize>>,
    /// Covariate labels in column order.
    pub columns: Vec<String>,
}

impl JointTable {
    pub fn n_configs(&self) -> usize {
        self.probs.len()
    }

    pub fn total_probability(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Iterates `(x, y, p)` over all configurations; `x` is in covariate
    /// column order.
    pub fn for_each(&self, mut f: impl FnMut(&[f64], f64, f64)) {
        let k = self.node_ids.len();
        let d = self.columns.len();
        let mut states = vec![0usize; k];
        let mut x = vec![0.0f64; d];
        for &p in &self.probs {
            let mut y = 0.0;
            for pos in 0..k {
                let v = self.supports[pos][states[pos]];
                match self.cov_position[pos] {
                    Some(col) => x[col] = v,
                    None => y = v,
                }
            }
            f(&x, y, p);
            // Advance the mixed-radix counter (last node least significant).
            for pos in (0..k).rev() {
                states[pos] += 1;
                if states[pos] < self.supports[pos].len() {
                    break;
                }
                states[pos] = 0;
            }
        }
    }

    /// Exact expectation of `g(x, y)`.
    pub fn expectation(&self, mut g: impl FnMut(&[f64], f64) -> f64) -> f64 {
        let mut acc = 0.0;
        self.for_each(|x, y, p| acc += p * g(x, y));
        acc
    }

    /// Exact accuracy of a deterministic classifier.
    pub fn accuracy(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.expectation(|x, y| if (f(x) - y).abs() < 1e-12 { 1.0 } else { 0.0 })
    }

    /// Marginal probability that covariate column `col` takes value `v`.
    pub fn marginal(&self, col: usize, v: f64) -> f64 {
        self.expectation(|x, _| if (x[col] - v).abs() < 1e-12 { 1.0 } else { 0.0 })
    }

    /// Exact conditional means of the response given the covariate columns
    /// in `cols`, as a lookup predictor. Zero-probability cells fall back to
    /// the overall mean.
    pub fn conditional_means(&self, cols: &[usize]) -> ExactConditional {
        let mut cells: BTreeMap<Vec<i64>, (f64, f64)> = BTreeMap::new();
        let mut num = 0.0;
        let mut den = 0.0;
        self.for_each(|x, y, p| {
            let key: Vec<i64> = cols.iter().map(|&c| quantize(x[c])).collect();
            let e = cells.entry(key).or_insert((0.0, 0.0));
            e.0 += p * y;
            e.1 += p;
            num += p * y;
            den += p;
        });
        let fallback = if den > 0.0 { num / den } else { 0.0 };
        ExactConditional {
            cols: cols.to_vec(),
            means: cells
                .into_iter()
                .map(|(k, (n, d))| (k, if d > 1e-300 { n / d } else { fallback }))
                .collect(),
            fallback,
        }
    }

    /// Uniform (or weighted) mixture of joint tables with identical layouts.
    pub fn mixture(parts: &[&JointTable], weights: Option<&[f64]>) -> Result<JointTable> {
        let first = parts
            .first()
            .ok_or_else(|| Error::input("mixture of zero tables"))?;
        let w: Vec<f64> = match weights {
            Some(w) => {
                if w.len() != parts.len() {
                    return Err(Error::input("weights must match tables"));
                }
                w.to_vec()
            }
            None => vec![1.0 / parts.len() as f64; parts.len()],
        };
        let mut probs = vec![0.0; first.probs.len()];
        for (t, wi) in parts.iter().zip(&w) {
            if t.supports != first.supports || t.node_ids != first.node_ids {
                return Err(Error::validation("mixture requires identical supports"));
            }
            for (acc, p) in probs.iter_mut().zip(&t.probs) {
                *acc += wi * p;
            }
        }
        Ok(JointTable {
            node_ids: first.node_ids.clone(),
            supports: first.supports.clone(),
            probs,
            cov_position: first.cov_position.clone(),
            columns: first.columns.clone(),
        })
    }
}

fn quantize(v: f64) -> i64 {
    (v * 1e9).round() as i64
}

/// An exact conditional-mean predictor over discrete cells.
#[derive(Debug, Clone)]
pub struct ExactConditional {
    cols: Vec<usize>,
    means: BTreeMap<Vec<i64>, f64>,
    fallback: f64,
}

impl ExactConditional {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let key: Vec<i64> = self.cols.iter().map(|&c| quantize(x[c])).collect();
        *self.means.get(&key).unwrap_or(&self.fallback)
    }

    pub fn columns(&self) -> &[usize] {
        &self.cols
    }
}

enum NodeRule {
    Table {
        /// Positions (into the node order) of the CPT parents.
        parent_positions: Vec<usize>,
        parent_cards: Vec<usize>,
        table: Vec<Vec<f64>>,
    },
    Point,
}

/// Enumerates the joint distribution of a fully discrete SCM under `env`.
pub fn enumerate_discrete(
    scm: &Scm,
    family: &EnvironmentFamily,
    env_label: &str,
) -> Result<JointTable> {
    let env = family.get(family.index_of(env_label)?);
    let dag = scm.dag();
    let order = scm.sample_order();
    let pos_of = |label: &str| -> Result<usize> {
        let id = dag.node_id(label)?;
        order
            .iter()
            .position(|&n| n == id)
            .ok_or_else(|| Error::validation(format!("`{label}` missing from sample order")))
    };

    let mut supports: Vec<Vec<f64>> = Vec::with_capacity(order.len());
    let mut rules: Vec<NodeRule> = Vec::with_capacity(order.len());
    for &node in order {
        let mech = scm.effective_mechanism(env, node);
        match mech {
            Mechanism::DiscreteTable {
                parents,
                parent_cards,
                states,
                table,
            } => {
                supports.push((0..*states).map(|s| s as f64).collect());
                rules.push(NodeRule::Table {
                    parent_positions: parents
                        .iter()
                        .map(|l| pos_of(l))
                        .collect::<Result<_>>()?,
                    parent_cards: parent_cards.clone(),
                    table: table.clone(),
                });
            }
            Mechanism::PointMass { value } => {
                supports.push(vec![*value]);
                rules.push(NodeRule::Point);
            }
            other => {
                return Err(Error::Unsupported(format!(
                    "node `{}` has a continuous mechanism ({}), cannot enumerate",
                    dag.label(node),
                    kind_name(other)
                )))
            }
        }
    }

    let mut n_configs: usize = 1;
    for s in &supports {
        n_configs = n_configs
            .checked_mul(s.len())
            .filter(|&c| c <= MAX_CONFIGS)
            .ok_or_else(|| {
                Error::Resource(format!("state space exceeds {MAX_CONFIGS} configurations"))
            })?;
    }

    let k = order.len();
    let mut probs = vec![0.0f64; n_configs];
    let mut states = vec![0usize; k];
    for prob in probs.iter_mut() {
        let mut p = 1.0;
        for pos in 0..k {
            match &rules[pos] {
                NodeRule::Point => {}
                NodeRule::Table {
                    parent_positions,
                    parent_cards,
                    table,
                } => {
                    let mut idx = 0usize;
                    for (pp, card) in parent_positions.iter().zip(parent_cards) {
                        let pv = supports[*pp][states[*pp]].round();
                        if pv < 0.0 || pv as usize >= *card {
                            return Err(Error::validation(format!(
                                "parent of `{}` takes value {pv}, outside its declared support",
                                dag.label(order[pos])
                            )));
                        }
                        idx = idx * card + pv as usize;
                    }
                    p *= table[idx][states[pos]];
                }
            }
            if p == 0.0 {
                break;
            }
        }
        *prob = p;
        for pos in (0..k).rev() {
            states[pos] += 1;
            if states[pos] < supports[pos].len() {
                break;
            }
            states[pos] = 0;
        }
    }

    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Numeric {
            node: "joint".to_string(),
            message: format!("joint probabilities sum to {total}"),
        });
    }

    Ok(JointTable {
        node_ids: order.to_vec(),
        supports,
        probs,
        cov_position: order.iter().map(|&n| dag.covariate_index(n)).collect(),
        columns: dag
            .covariates()
            .iter()
            .map(|&c| dag.label(c).to_string())
            .collect(),
    })
}

fn kind_name(m: &Mechanism) -> &'static str {
    match m {
        Mechanism::LinearGaussian { .. } => "linearGaussian",
        Mechanism::Expression { .. } => "expression",
        Mechanism::DiscreteTable { .. } => "discreteTable",
        Mechanism::PointMass { .. } => "pointMass",
        Mechanism::Perturbed { .. } => "perturbed",
    }
}
