//! Random problem instances for property sweeps.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use crate::gaussian::{LinearEnv, LinearScmView};
use crate::graph::{check_star_condition, Dag};
use crate::scm::{Environment, EnvironmentFamily, Mechanism, Scm, Task};

/// A random DAG over `n_cov` covariates plus `Y` and `E`.
///
/// Covariates and the response are placed in a random topological order;
/// forward edges appear independently with probability `edge_prob`; `E`
/// points to `env_children` randomly chosen covariates.
pub fn random_dag(rng: &mut ChaCha8Rng, n_cov: usize, edge_prob: f64, env_children: usize) -> Dag {
    let mut labels: Vec<String> = (1..=n_cov).map(|i| format!("X{i}")).collect();
    labels.push("Y".to_string());
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(rng);
    let mut edges: Vec<(String, String)> = Vec::new();
    for i in 0..order.len() {
        for j in (i + 1)..order.len() {
            if rng.random::<f64>() < edge_prob {
                edges.push((labels[order[i]].clone(), labels[order[j]].clone()));
            }
        }
    }
    let mut covs: Vec<usize> = (0..n_cov).collect();
    covs.shuffle(rng);
    for &c in covs.iter().take(env_children.min(n_cov)) {
        edges.push(("E".to_string(), labels[c].clone()));
    }
    labels.push("E".to_string());
    let edge_refs: Vec<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let label_refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
    Dag::new(&label_refs, &edge_refs, "Y", "E").expect("construction is acyclic")
}

fn random_cpt(rng: &mut ChaCha8Rng, rows: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let p = 0.1 + 0.8 * rng.random::<f64>();
            vec![1.0 - p, p]
        })
        .collect()
}

/// A random binary SCM on `dag` with `n_envs` environments overriding the
/// mechanisms of `CH(E)`.
pub fn random_discrete_scm(
    rng: &mut ChaCha8Rng,
    dag: &Dag,
    n_envs: usize,
) -> (Scm, EnvironmentFamily) {
    let mut mechanisms: Vec<(String, Mechanism)> = Vec::new();
    for &id in dag.topological_order().iter() {
        if id == dag.env() {
            continue;
        }
        let parents: Vec<&str> = dag
            .parents_of(id)
            .iter()
            .filter(|&&p| p != dag.env())
            .map(|&p| dag.label(p))
            .collect();
        let rows = 1usize << parents.len();
        let parent_pairs: Vec<(&str, usize)> = parents.iter().map(|&p| (p, 2)).collect();
        mechanisms.push((
            dag.label(id).to_string(),
            Mechanism::table(&parent_pairs, 2, random_cpt(rng, rows)),
        ));
    }
    let mech_refs: Vec<(&str, Mechanism)> = mechanisms
        .iter()
        .map(|(l, m)| (l.as_str(), m.clone()))
        .collect();
    let scm = Scm::new(dag.clone(), mech_refs, Task::Classification).expect("valid scm");

    let env_children: Vec<usize> = dag.children_of(dag.env()).to_vec();
    let mut envs = vec![Environment::base("e0")];
    for e in 1..n_envs {
        let mut env = Environment::base(&format!("e{e}"));
        for &child in &env_children {
            let parents: Vec<&str> = dag
                .parents_of(child)
                .iter()
                .filter(|&&p| p != dag.env())
                .map(|&p| dag.label(p))
                .collect();
            let mech = if rng.random::<f64>() < 0.5 {
                // Strong intervention: fresh Bernoulli, parents dropped.
                Mechanism::bernoulli(0.1 + 0.8 * rng.random::<f64>())
            } else {
                let parent_pairs: Vec<(&str, usize)> = parents.iter().map(|&p| (p, 2)).collect();
                Mechanism::table(&parent_pairs, 2, random_cpt(rng, 1 << parents.len()))
            };
            env = env.with_override(dag.label(child), mech);
        }
        envs.push(env);
    }
    let labels: Vec<String> = envs.iter().map(|e| e.label.clone()).collect();
    let family = EnvironmentFamily::new(envs)
        .and_then(|f| {
            let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
            f.with_training(&refs)
        })
        .expect("valid family");
    (scm, family)
}

/// A random linear-Gaussian view on a star-condition-satisfying DAG with a
/// strong-intervention family (observational plus strong environments).
pub fn random_linear_star_instance(
    rng: &mut ChaCha8Rng,
    n_cov: usize,
) -> Option<(Dag, LinearScmView)> {
    let n_children = 1 + (rng.random::<f64>() * 2.0) as usize;
    let dag = random_dag(rng, n_cov, 0.35, n_children);
    if !check_star_condition(&dag) || dag.children_of(dag.env()).is_empty() {
        return None;
    }
    let d = dag.covariates().len();
    let node_col = |id: usize| -> usize {
        if id == dag.response() {
            d
        } else {
            dag.covariate_index(id).expect("covariate")
        }
    };
    let mut coeff = DMatrix::zeros(d + 1, d + 1);
    for (a, b) in dag.edges() {
        if a == dag.env() || b == dag.env() {
            continue;
        }
        let mag = 0.3 + 1.2 * rng.random::<f64>();
        let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
        coeff[(node_col(b), node_col(a))] = sign * mag;
    }
    let base = LinearEnv {
        label: "obs".to_string(),
        coeff: coeff.clone(),
        shift: DVector::zeros(d + 1),
        noise_var: DVector::from_element(d + 1, 1.0),
    };
    let (ch_int, _) = crate::graph::forbidden_descendants(&dag);
    let strong = |label: &str, delta: f64| {
        let mut e = base.clone();
        e.label = label.to_string();
        for id in ch_int.iter() {
            let row = node_col(id);
            for c in 0..=d {
                e.coeff[(row, c)] = 0.0;
            }
            e.shift[row] = delta;
            e.noise_var[row] = 1.0;
        }
        e
    };
    let envs = vec![base.clone(), strong("strong0", 0.0), strong("strong1", 1.0)];
    let view = LinearScmView::from_envs(
        dag.covariates()
            .iter()
            .map(|&c| dag.label(c).to_string())
            .collect(),
        envs,
    )
    .expect("valid view");
    Some((dag, view))
}

/// An instance for the individual-vs-population equivalence: a small binary
/// SCM plus an observation set `O` containing all non-descendants of the
/// intervened nodes, such that every intervened node's parents lie in
/// `O ∪ CH(E)`.
pub fn random_individuals_instance(
    rng: &mut ChaCha8Rng,
    n_cov: usize,
) -> Option<(Scm, Vec<usize>)> {
    let n_children = 1 + (rng.random::<f64>() * 2.0) as usize;
    let dag = random_dag(rng, n_cov, 0.4, n_children);
    let ch_e: Vec<usize> = dag.children_of(dag.env()).to_vec();
    if ch_e.is_empty() {
        return None;
    }
    let mut downstream: std::collections::BTreeSet<usize> = ch_e.iter().copied().collect();
    for &j in &ch_e {
        downstream.extend(dag.descendant_ids(j));
    }
    let observed: Vec<usize> = (0..dag.node_count())
        .filter(|&v| v != dag.env() && !downstream.contains(&v))
        .collect();
    for &j in &ch_e {
        for &p in dag.parents_of(j) {
            if p != dag.env() && !observed.contains(&p) && !ch_e.contains(&p) {
                return None;
            }
        }
    }
    let (scm, _) = random_discrete_scm(rng, &dag, 1);
    Some((scm, observed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn random_dags_are_valid() {
        let mut r = rng::stream(1, &[1]);
        for i in 0..50 {
            let dag = random_dag(&mut r, 3 + i % 6, 0.3, 1 + i % 2);
            assert!(dag.node_count() >= 5);
            assert!(dag.parents_of(dag.env()).is_empty());
        }
    }

    #[test]
    fn random_discrete_scms_enumerate() {
        let mut r = rng::stream(2, &[2]);
        for _ in 0..20 {
            let dag = random_dag(&mut r, 4, 0.4, 2);
            let (scm, family) = random_discrete_scm(&mut r, &dag, 3);
            for env in family.environments() {
                let joint = crate::scm::enumerate_discrete(&scm, &family, &env.label).unwrap();
                assert!((joint.total_probability() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn star_instances_satisfy_the_condition() {
        let mut r = rng::stream(3, &[3]);
        let mut found = 0;
        for _ in 0..200 {
            if let Some((dag, view)) = random_linear_star_instance(&mut r, 5) {
                assert!(check_star_condition(&dag));
                assert_eq!(view.env_labels().len(), 3);
                found += 1;
            }
        }
        assert!(found > 20, "found = {found}");
    }

    #[test]
    fn individuals_instances_meet_preconditions() {
        let mut r = rng::stream(4, &[4]);
        let mut found = 0;
        for _ in 0..300 {
            if let Some((scm, observed)) = random_individuals_instance(&mut r, 3) {
                let dag = scm.dag();
                let ch_e = dag.children_of(dag.env());
                for &o in &observed {
                    assert!(!ch_e.contains(&o));
                    for &j in ch_e {
                        assert!(!dag.descendant_ids(j).contains(&o));
                    }
                }
                found += 1;
            }
        }
        assert!(found > 30, "found = {found}");
    }
}
