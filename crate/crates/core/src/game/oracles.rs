//! Executable checks of the theory on exactly enumerable models.

use crate::error::{Error, Result};
use crate::graph::{relatives, stable_blanket, Dag, NodeSet, RelativeKind};
use crate::predictors::{eval_loss, Loss};
use crate::scm::enumerate::{enumerate_discrete, ExactConditional, JointTable};
use crate::scm::{Environment, EnvironmentFamily, Mechanism, Scm};

#[derive(Debug, Clone)]
pub struct OracleCase {
    pub label: String,
    pub detail: String,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub name: String,
    pub cases: Vec<OracleCase>,
    pub passed: bool,
}

impl OracleReport {
    fn from_cases(name: &str, cases: Vec<OracleCase>) -> Self {
        let passed = cases.iter().all(|c| c.passed);
        OracleReport {
            name: name.to_string(),
            cases,
            passed,
        }
    }
}

fn subset_cols(dag: &Dag, s: &NodeSet) -> Vec<usize> {
    s.iter()
        .map(|id| dag.covariate_index(id).expect("covariate"))
        .collect()
}

fn enumerate_family(
    scm: &Scm,
    family: &EnvironmentFamily,
) -> Result<Vec<(String, JointTable)>> {
    family
        .environments()
        .iter()
        .map(|e| Ok((e.label.clone(), enumerate_discrete(scm, family, &e.label)?)))
        .collect()
}

fn pooled_conditional(
    tables: &[(String, JointTable)],
    cols: &[usize],
) -> Result<ExactConditional> {
    let refs: Vec<&JointTable> = tables.iter().map(|(_, t)| t).collect();
    Ok(JointTable::mixture(&refs, None)?.conditional_means(cols))
}

fn exact_risk(table: &JointTable, f: &ExactConditional, loss: Loss) -> f64 {
    table.expectation(|x, y| eval_loss(loss, y, f.predict(x)))
}

/// The stable-blanket predictor is a risk floor: in every environment no
/// predictor measurable in the forbidden-set complement beats it, and the
/// per-environment optimum coincides with it cellwise.
pub fn stable_blanket_floor(
    scm: &Scm,
    family: &EnvironmentFamily,
    loss: Loss,
) -> Result<OracleReport> {
    let dag = scm.dag();
    let sb_cols = subset_cols(dag, &stable_blanket(dag));
    let (_, forb) = crate::graph::forbidden_descendants(dag);
    let allowed_cols: Vec<usize> = dag
        .covariates()
        .iter()
        .enumerate()
        .filter(|(_, &id)| !forb.contains(id))
        .map(|(col, _)| col)
        .collect();

    let tables = enumerate_family(scm, family)?;
    let f_sb = pooled_conditional(&tables, &sb_cols)?;

    let mut cases = Vec::new();
    for (label, table) in &tables {
        let risk_sb = exact_risk(table, &f_sb, loss);
        let minimizer = table.conditional_means(&allowed_cols);
        let risk_best = exact_risk(table, &minimizer, loss);
        let floor_ok = risk_best >= risk_sb - 1e-12;

        // The per-environment minimizer agrees with the pooled stable
        // blanket predictor on every positive-probability cell.
        let mut max_cell_gap: f64 = 0.0;
        table.for_each(|x, _, p| {
            if p > 1e-12 {
                max_cell_gap = max_cell_gap.max((minimizer.predict(x) - f_sb.predict(x)).abs());
            }
        });
        let cell_ok = max_cell_gap <= 1e-9;
        cases.push(OracleCase {
            label: label.clone(),
            detail: format!(
                "risk_sb={risk_sb:.12}, best_allowed={risk_best:.12}, cell_gap={max_cell_gap:.2e}"
            ),
            passed: floor_ok && cell_ok,
        });
    }
    Ok(OracleReport::from_cases("stable-blanket-floor", cases))
}

/// A follower utility for the comparison oracle.
pub enum UtilityCase<'a> {
    /// The follower maximizes the leader's risk.
    LeaderRisk,
    /// `alpha + beta * E[f(X)] - E[cost_e(X)]` with per-environment costs.
    AffineMinusCost {
        alpha: f64,
        beta: f64,
        costs: Vec<&'a dyn Fn(&[f64]) -> f64>,
    },
}

/// The stable-blanket predictor never does worse than the parent predictor
/// at the follower's best response, for both utility classes.
pub fn blanket_vs_parents(
    scm: &Scm,
    family: &EnvironmentFamily,
    loss: Loss,
    case: &UtilityCase,
) -> Result<OracleReport> {
    let dag = scm.dag();
    let sb_cols = subset_cols(dag, &stable_blanket(dag));
    let pa_cols = subset_cols(dag, &relatives(dag, dag.label(dag.response()), RelativeKind::Parents)?);

    let tables = enumerate_family(scm, family)?;
    let f_sb = pooled_conditional(&tables, &sb_cols)?;
    let f_pa = pooled_conditional(&tables, &pa_cols)?;

    let risks = |f: &ExactConditional| -> Vec<f64> {
        tables.iter().map(|(_, t)| exact_risk(t, f, loss)).collect()
    };
    let utilities = |f: &ExactConditional| -> Vec<f64> {
        tables
            .iter()
            .enumerate()
            .map(|(idx, (_, t))| match case {
                UtilityCase::LeaderRisk => exact_risk(t, f, loss),
                UtilityCase::AffineMinusCost { alpha, beta, costs } => {
                    alpha + beta * t.expectation(|x, _| f.predict(x))
                        - t.expectation(|x, _| (costs[idx])(x))
                }
            })
            .collect()
    };

    let sup_at_best = |f: &ExactConditional| -> (f64, usize) {
        let u = utilities(f);
        let r = risks(f);
        let max_u = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sup_risk = f64::NEG_INFINITY;
        let mut ties = 0usize;
        for (ui, ri) in u.iter().zip(&r) {
            if *ui >= max_u - 1e-12 {
                sup_risk = sup_risk.max(*ri);
                ties += 1;
            }
        }
        (sup_risk, ties)
    };

    let (sup_sb, ties_sb) = sup_at_best(&f_sb);
    let (sup_pa, ties_pa) = sup_at_best(&f_pa);
    let case_name = match case {
        UtilityCase::LeaderRisk => "adversarial",
        UtilityCase::AffineMinusCost { .. } => "prediction-minus-cost",
    };
    let cases = vec![OracleCase {
        label: case_name.to_string(),
        detail: format!(
            "sup_risk(sb)={sup_sb:.12} (ties {ties_sb}), sup_risk(pa)={sup_pa:.12} (ties {ties_pa})"
        ),
        passed: sup_sb <= sup_pa + 1e-12,
    }];
    Ok(OracleReport::from_cases("blanket-vs-parents", cases))
}

/// Grid of joint do-values for the intervened nodes.
fn intervention_grid(scm: &Scm) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let dag = scm.dag();
    let targets: Vec<usize> = dag.children_of(dag.env()).to_vec();
    let mut grid: Vec<Vec<f64>> = vec![Vec::new()];
    for &t in &targets {
        let states = match scm.mechanism(t) {
            Mechanism::DiscreteTable { states, .. } => *states,
            Mechanism::PointMass { .. } => 1,
            _ => {
                return Err(Error::Unsupported(
                    "individual-follower oracle needs discrete mechanisms".into(),
                ))
            }
        };
        let mut next = Vec::with_capacity(grid.len() * states);
        for prefix in &grid {
            for s in 0..states {
                let mut row = prefix.clone();
                row.push(s as f64);
                next.push(row);
            }
        }
        grid = next;
    }
    Ok((targets, grid))
}

/// Builds the SCM where each intervened node is a fixed function of the
/// observed nodes (constants are the special case of empty `observed`).
fn do_scm(
    scm: &Scm,
    targets: &[usize],
    observed: &[usize],
    assignment: &dyn Fn(&[f64], usize) -> f64,
) -> Result<Scm> {
    let dag = scm.dag();
    // Graph surgery: intervened nodes lose their parents and point to the
    // observed set instead.
    let mut edges: Vec<(String, String)> = Vec::new();
    for (a, b) in dag.edges() {
        if targets.contains(&b) {
            continue;
        }
        edges.push((dag.label(a).to_string(), dag.label(b).to_string()));
    }
    for &t in targets {
        for &o in observed {
            edges.push((dag.label(o).to_string(), dag.label(t).to_string()));
        }
        // Keep the intervention edge so the target stays a child of E.
        edges.push((dag.label(dag.env()).to_string(), dag.label(t).to_string()));
    }
    let labels: Vec<&str> = (0..dag.node_count()).map(|i| dag.label(i)).collect();
    let edge_refs: Vec<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let new_dag = Dag::new(
        &labels,
        &edge_refs,
        dag.label(dag.response()),
        dag.label(dag.env()),
    )?;

    let obs_cards: Vec<usize> = observed
        .iter()
        .map(|&o| match scm.mechanism(o) {
            Mechanism::DiscreteTable { states, .. } => Ok(*states),
            Mechanism::PointMass { .. } => Ok(1),
            _ => Err(Error::Unsupported("observed nodes must be discrete".into())),
        })
        .collect::<Result<_>>()?;

    let mut mechanisms: Vec<(String, Mechanism)> = Vec::new();
    for &id in dag.topological_order().iter() {
        if id == dag.env() {
            continue;
        }
        if let Some(pos) = targets.iter().position(|&t| t == id) {
            let states = match scm.mechanism(id) {
                Mechanism::DiscreteTable { states, .. } => *states,
                Mechanism::PointMass { .. } => 1,
                _ => unreachable!("checked in intervention_grid"),
            };
            // CPT over the observed parents: a point mass at the assigned value.
            let rows: usize = obs_cards.iter().product::<usize>().max(1);
            let mut table = Vec::with_capacity(rows);
            for row_idx in 0..rows {
                let mut rest = row_idx;
                let mut obs_values = vec![0.0; observed.len()];
                for i in (0..observed.len()).rev() {
                    obs_values[i] = (rest % obs_cards[i]) as f64;
                    rest /= obs_cards[i];
                }
                let value = assignment(&obs_values, pos);
                let mut dist = vec![0.0; states];
                dist[value as usize] = 1.0;
                table.push(dist);
            }
            let parent_pairs: Vec<(&str, usize)> = observed
                .iter()
                .zip(&obs_cards)
                .map(|(&o, &c)| (dag.label(o), c))
                .collect();
            mechanisms.push((
                dag.label(id).to_string(),
                Mechanism::table(&parent_pairs, states, table),
            ));
        } else {
            mechanisms.push((dag.label(id).to_string(), scm.mechanism(id).clone()));
        }
    }
    let mech_refs: Vec<(&str, Mechanism)> = mechanisms
        .iter()
        .map(|(l, m)| (l.as_str(), m.clone()))
        .collect();
    Scm::new(new_dag, mech_refs, scm.task())
}

fn single_env_family() -> EnvironmentFamily {
    EnvironmentFamily::new(vec![Environment::base("do")]).expect("valid")
}

/// Exhaustively verifies that averaging individually optimal constant
/// interventions (conditional on the observation) equals the optimum of a
/// single population follower choosing observation-measurable policies.
pub fn individual_population_equivalence(
    scm: &Scm,
    observed: &[usize],
    kernel: &dyn Fn(&[f64], f64) -> f64,
) -> Result<OracleReport> {
    let dag = scm.dag();
    let (targets, grid) = intervention_grid(scm)?;
    if targets.is_empty() {
        return Err(Error::input("no intervened nodes"));
    }
    for &o in observed {
        if o == dag.env() {
            return Err(Error::input("the environment node cannot be observed"));
        }
        if targets.contains(&o) || targets.iter().any(|&t| dag.descendant_ids(t).contains(&o)) {
            return Err(Error::input(
                "observed nodes must be non-descendants of the intervened nodes",
            ));
        }
    }
    for &t in &targets {
        for &p in dag.parents_of(t) {
            if p != dag.env() && !observed.contains(&p) && !targets.contains(&p) {
                return Err(Error::input(
                    "every intervened node's parents must be observed or intervened",
                ));
            }
        }
    }

    // Realized observation cells under the base distribution. Observed
    // values are discrete states, so integer keys are exact.
    let base_family = EnvironmentFamily::new(vec![Environment::base("base")])?;
    let base = enumerate_discrete(scm, &base_family, "base")?;
    let obs_cols: Vec<Option<usize>> = observed.iter().map(|&o| dag.covariate_index(o)).collect();
    let obs_key = |x: &[f64], y: f64| -> Vec<i64> {
        obs_cols
            .iter()
            .map(|col| match col {
                Some(c) => x[*c].round() as i64,
                None => y.round() as i64,
            })
            .collect()
    };
    let mut cell_probs: std::collections::BTreeMap<Vec<i64>, f64> = Default::default();
    base.for_each(|x, y, p| {
        *cell_probs.entry(obs_key(x, y)).or_insert(0.0) += p;
    });
    let cells: Vec<(Vec<i64>, f64)> = cell_probs
        .into_iter()
        .filter(|(_, p)| *p > 1e-12)
        .collect();

    // Conditional value table T[cell][c] plus a check that observation
    // probabilities are intervention-invariant.
    let mut table = vec![vec![f64::NEG_INFINITY; grid.len()]; cells.len()];
    for (c_idx, c) in grid.iter().enumerate() {
        let do_model = do_scm(scm, &targets, &[], &|_, pos| c[pos])?;
        let family = single_env_family();
        let joint = enumerate_discrete(&do_model, &family, "do")?;
        let mut num: std::collections::BTreeMap<Vec<i64>, f64> = Default::default();
        let mut den: std::collections::BTreeMap<Vec<i64>, f64> = Default::default();
        joint.for_each(|x, y, p| {
            let key = obs_key(x, y);
            *num.entry(key.clone()).or_insert(0.0) += p * kernel(x, y);
            *den.entry(key).or_insert(0.0) += p;
        });
        for (cell_idx, (key, base_p)) in cells.iter().enumerate() {
            let d = den.get(key).copied().unwrap_or(0.0);
            if (d - base_p).abs() > 1e-9 {
                return Err(Error::Numeric {
                    node: "individuals".into(),
                    message: format!(
                        "observation probability moved under intervention: {d} vs {base_p}"
                    ),
                });
            }
            if d > 0.0 {
                table[cell_idx][c_idx] = num.get(key).copied().unwrap_or(0.0) / d;
            }
        }
    }

    // Individual side: best constant per observation cell, averaged.
    let individual: f64 = cells
        .iter()
        .enumerate()
        .map(|(cell_idx, (_, p))| {
            p * table[cell_idx]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();

    // Population side: exhaustive search over observation-measurable
    // policies, each evaluated by full enumeration.
    let n_functions = (grid.len() as f64).powi(cells.len() as i32);
    if n_functions > 200_000.0 {
        return Err(Error::Resource(format!(
            "{n_functions} candidate policies exceed the exhaustive-search budget"
        )));
    }
    let mut best_population = f64::NEG_INFINITY;
    let mut assignment = vec![0usize; cells.len()];
    loop {
        let keys: Vec<Vec<i64>> = cells.iter().map(|(k, _)| k.clone()).collect();
        let grid_ref = &grid;
        let assignment_ref = assignment.clone();
        let value = {
            let policy = |obs_values: &[f64], pos: usize| -> f64 {
                let key: Vec<i64> = obs_values.iter().map(|v| v.round() as i64).collect();
                // Unrealized observation cells are irrelevant; any value works.
                let cell = keys.iter().position(|k| *k == key).unwrap_or(0);
                grid_ref[assignment_ref[cell]][pos]
            };
            let do_model = do_scm(scm, &targets, observed, &policy)?;
            let family = single_env_family();
            let joint = enumerate_discrete(&do_model, &family, "do")?;
            joint.expectation(|x, y| kernel(x, y))
        };
        best_population = best_population.max(value);
        // Advance the assignment counter.
        let mut pos = 0;
        loop {
            if pos == assignment.len() {
                break;
            }
            assignment[pos] += 1;
            if assignment[pos] < grid.len() {
                break;
            }
            assignment[pos] = 0;
            pos += 1;
        }
        if pos == assignment.len() {
            break;
        }
    }

    let gap = (individual - best_population).abs();
    let cases = vec![OracleCase {
        label: "aggregate-equality".to_string(),
        detail: format!(
            "individual={individual:.12}, population={best_population:.12}, gap={gap:.2e}"
        ),
        passed: gap <= 1e-9,
    }];
    Ok(OracleReport::from_cases("individual-population", cases))
}
