//! Forward sampling.
//!
//! Noise is drawn column-wise from a dedicated stream per
//! `(environment, node)`, derived from the call's master seed, so equal
//! `(seed, env, n)` produce bit-identical datasets independent of scheduling.

use nalgebra::DMatrix;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

use super::{
    CompiledExpr, Dataset, Environment, EnvironmentFamily, Mechanism, NoiseDist,
    PerturbationPolicy, PolicyInput, Scm,
};

fn draw_noise(dist: &NoiseDist, rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    match dist {
        NoiseDist::Gaussian { mean, std } => (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            })
            .collect(),
        NoiseDist::Uniform { lo, hi } => {
            (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
        }
        NoiseDist::Bernoulli { p } => (0..n)
            .map(|_| if rng.random::<f64>() < *p { 1.0 } else { 0.0 })
            .collect(),
    }
}

enum Prepared {
    Linear {
        parent_ids: Vec<usize>,
        coefficients: Vec<f64>,
        intercept: f64,
        noise_std: f64,
        noise: Vec<f64>,
    },
    Expr {
        parent_ids: Vec<usize>,
        compiled: CompiledExpr,
        noise: Vec<f64>,
    },
    Table {
        parent_ids: Vec<usize>,
        parent_cards: Vec<usize>,
        table: Vec<Vec<f64>>,
        uniforms: Vec<f64>,
    },
    Point {
        value: f64,
    },
    Perturbed {
        base: Box<Prepared>,
        policy: PerturbationPolicy,
        input_ids: Vec<Option<usize>>,
    },
}

fn prepare(
    scm: &Scm,
    mech: &Mechanism,
    node: usize,
    rng: &mut ChaCha8Rng,
    n: usize,
) -> Result<Prepared> {
    let dag = scm.dag();
    let resolve = |labels: &[String]| -> Result<Vec<usize>> {
        labels.iter().map(|l| dag.node_id(l)).collect()
    };
    Ok(match mech {
        Mechanism::LinearGaussian {
            parents,
            coefficients,
            intercept,
            noise_std,
        } => Prepared::Linear {
            parent_ids: resolve(parents)?,
            coefficients: coefficients.clone(),
            intercept: *intercept,
            noise_std: *noise_std,
            noise: draw_noise(&NoiseDist::standard_gaussian(), rng, n),
        },
        Mechanism::Expression { parents, expr, noise } => Prepared::Expr {
            parent_ids: resolve(parents)?,
            compiled: expr.compile(parents)?,
            noise: draw_noise(noise, rng, n),
        },
        Mechanism::DiscreteTable {
            parents,
            parent_cards,
            table,
            ..
        } => Prepared::Table {
            parent_ids: resolve(parents)?,
            parent_cards: parent_cards.clone(),
            table: table.clone(),
            uniforms: (0..n).map(|_| rng.random::<f64>()).collect(),
        },
        Mechanism::PointMass { value } => Prepared::Point { value: *value },
        Mechanism::Perturbed { base, policy } => {
            let prepared_base = prepare(scm, base, node, rng, n)?;
            let input_ids = policy
                .inputs
                .iter()
                .map(|i| match i {
                    PolicyInput::Node(l) => dag.node_id(l).map(Some),
                    PolicyInput::OwnNoise => Ok(None),
                })
                .collect::<Result<Vec<_>>>()?;
            Prepared::Perturbed {
                base: Box::new(prepared_base),
                policy: policy.clone(),
                input_ids,
            }
        }
    })
}

impl Prepared {
    /// The noise value consumed at `row`, exposed to policies as `OwnNoise`.
    fn own_noise(&self, row: usize) -> f64 {
        match self {
            Prepared::Linear { noise, .. } => noise[row],
            Prepared::Expr { noise, .. } => noise[row],
            Prepared::Table { uniforms, .. } => uniforms[row],
            Prepared::Point { .. } => 0.0,
            Prepared::Perturbed { base, .. } => base.own_noise(row),
        }
    }

    fn eval(&self, values: &[f64], row: usize) -> f64 {
        match self {
            Prepared::Linear {
                parent_ids,
                coefficients,
                intercept,
                noise_std,
                noise,
            } => {
                let mut acc = intercept + noise_std * noise[row];
                for (pid, c) in parent_ids.iter().zip(coefficients) {
                    acc += c * values[*pid];
                }
                acc
            }
            Prepared::Expr {
                parent_ids,
                compiled,
                noise,
            } => {
                let parent_values: Vec<f64> =
                    parent_ids.iter().map(|&p| values[p]).collect();
                compiled.eval(&parent_values, noise[row])
            }
            Prepared::Table {
                parent_ids,
                parent_cards,
                table,
                uniforms,
            } => {
                let mut idx = 0usize;
                for (pid, card) in parent_ids.iter().zip(parent_cards) {
                    let v = values[*pid].round();
                    let s = if v >= 0.0 && (v as usize) < *card {
                        v as usize
                    } else {
                        // Out-of-range parent state; surfaced as NaN below.
                        return f64::NAN;
                    };
                    idx = idx * card + s;
                }
                let row_probs = &table[idx];
                let u = uniforms[row];
                let mut acc = 0.0;
                for (state, p) in row_probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return state as f64;
                    }
                }
                (row_probs.len() - 1) as f64
            }
            Prepared::Point { value } => *value,
            Prepared::Perturbed {
                base,
                policy,
                input_ids,
            } => {
                let base_value = base.eval(values, row);
                let inputs: Vec<f64> = input_ids
                    .iter()
                    .map(|i| match i {
                        Some(id) => values[*id],
                        None => base.own_noise(row),
                    })
                    .collect();
                base_value + policy.output(&inputs)
            }
        }
    }
}

/// Draws `n` i.i.d. rows from the SCM under the named environment.
pub fn sample(
    scm: &Scm,
    family: &EnvironmentFamily,
    env_label: &str,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::input("sample size must be >= 1"));
    }
    let env_idx = family.index_of(env_label)?;
    sample_env(scm, family.get(env_idx), env_idx, family.labels(), n, seed)
}

fn sample_env(
    scm: &Scm,
    env: &Environment,
    env_idx: usize,
    all_labels: Vec<String>,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    let dag = scm.dag();
    let order = scm.sample_order();
    let mut prepared = Vec::with_capacity(order.len());
    for &node in order {
        let mech = scm.effective_mechanism(env, node);
        let mut stream = rng::stream(seed, &[env_idx as u64, node as u64]);
        prepared.push((node, prepare(scm, mech, node, &mut stream, n)?));
    }

    let mut values = vec![0.0f64; dag.node_count()];
    let d = dag.covariates().len();
    let mut x = DMatrix::zeros(n, d);
    let mut y = vec![0.0; n];
    for row in 0..n {
        for (node, mech) in &prepared {
            let v = mech.eval(&values, row);
            if !v.is_finite() {
                return Err(Error::Numeric {
                    node: dag.label(*node).to_string(),
                    message: format!("non-finite value while sampling row {row}"),
                });
            }
            values[*node] = v;
        }
        for (j, &cid) in dag.covariates().iter().enumerate() {
            x[(row, j)] = values[cid];
        }
        y[row] = values[dag.response()];
    }
    if scm.task() == super::Task::Classification
        && y.iter().any(|&v| v != 0.0 && v != 1.0)
    {
        return Err(Error::Numeric {
            node: dag.label(dag.response()).to_string(),
            message: "classification response left {0,1}".to_string(),
        });
    }
    let columns = dag
        .covariates()
        .iter()
        .map(|&c| dag.label(c).to_string())
        .collect();
    Dataset::new(columns, x, y, all_labels, vec![env_idx as u32; n], scm.task())
}

/// Samples each training environment and pools the rows.
pub fn sample_training(
    scm: &Scm,
    family: &EnvironmentFamily,
    n_per_env: usize,
    seed: u64,
) -> Result<Dataset> {
    let parts: Vec<Dataset> = family
        .training_indices()
        .iter()
        .map(|&idx| {
            sample(
                scm,
                family,
                &family.get(idx).label.clone(),
                n_per_env,
                seed,
            )
        })
        .collect::<Result<_>>()?;
    if parts.is_empty() {
        return Err(Error::input("family has no training environments"));
    }
    Dataset::concat(&parts)
}
