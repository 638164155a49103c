//! Built-in benchmark models.
//!
//! These are the models behind the CLI scenario registry; tests use them as
//! fixtures. Names follow the registry ids.

use crate::graph::{AugmentationSpec, Dag};
use crate::scm::expr::build::{add, c, eps, mul, pow, scaled, sin, tanh, var};
use crate::scm::{
    make_perturbed_env, Environment, EnvironmentFamily, Expr, Mechanism, NoiseDist,
    PerturbationPolicy, Scm, Task,
};

/// The five-covariate benchmark graph: `PA(Y) = {X1, X2}`,
/// `SB(Y) = {X1, X2, X3}`, intervened child `X4` with descendant `X5`.
pub fn fig2_dag() -> Dag {
    Dag::new(
        &["X1", "X2", "X3", "X4", "X5", "Y", "E"],
        &[
            ("X2", "X1"),
            ("X1", "Y"),
            ("X2", "Y"),
            ("Y", "X3"),
            ("Y", "X4"),
            ("X2", "X4"),
            ("X4", "X5"),
            ("E", "X1"),
            ("E", "X4"),
        ],
        "Y",
        "E",
    )
    .expect("benchmark dag is valid")
}

fn fig2_mechanisms_linear() -> Vec<(&'static str, Mechanism)> {
    vec![
        ("X2", Mechanism::linear(&[], 0.0, 1.0)),
        ("X1", Mechanism::linear(&[("X2", 1.1)], 0.0, 0.3)),
        ("Y", Mechanism::linear(&[("X1", 1.0), ("X2", 0.8)], 0.0, 0.4)),
        ("X3", Mechanism::linear(&[("Y", 1.2)], 0.0, 0.5)),
        ("X4", Mechanism::linear(&[("Y", 1.4), ("X2", 0.55)], 0.0, 0.2)),
        ("X5", Mechanism::linear(&[("X4", 1.3)], 0.0, 0.2)),
    ]
}

/// Linear-Gaussian benchmark SCM with a single observational environment.
pub fn fig2_linear_scm() -> (Scm, EnvironmentFamily) {
    let scm = Scm::new(fig2_dag(), fig2_mechanisms_linear(), Task::Regression)
        .expect("benchmark scm is valid");
    let family = EnvironmentFamily::new(vec![Environment::base("obs")])
        .and_then(|f| f.with_training(&["obs"]))
        .and_then(|f| f.with_reference("obs"))
        .expect("single-environment family");
    (scm, family)
}

/// Linear benchmark SCM whose `X4` intervention may additionally read
/// `X1` and `X3`.
pub fn fig2_linear_scm_with_actions() -> (Scm, EnvironmentFamily) {
    let dag = fig2_dag();
    let actions = AugmentationSpec::from_labels(&dag, &[("X4", vec!["X1", "X3"])])
        .expect("action set is admissible");
    let scm = Scm::with_actions(dag, fig2_mechanisms_linear(), Task::Regression, actions)
        .expect("benchmark scm is valid");
    let family = EnvironmentFamily::new(vec![Environment::base("obs")])
        .and_then(|f| f.with_training(&["obs"]))
        .and_then(|f| f.with_reference("obs"))
        .expect("single-environment family");
    (scm, family)
}

fn shift_env(scm: &Scm, label: &str, d1: f64, d4: f64) -> Environment {
    let mut policies = Vec::new();
    if d1 != 0.0 {
        policies.push(PerturbationPolicy::constant("X1", d1.abs(), d1));
    }
    if d4 != 0.0 {
        policies.push(PerturbationPolicy::constant("X4", d4.abs(), d4));
    }
    make_perturbed_env(scm, label, &policies)
        .expect("constant shifts are valid")
        .with_params(vec![d1, d4])
}

/// Three environments shifting only the `X1` mechanism; the stable blanket
/// and parent sets stay invariant across them.
pub fn fig2_shift_family(scm: &Scm) -> EnvironmentFamily {
    EnvironmentFamily::new(vec![
        shift_env(scm, "e0", 0.0, 0.0),
        shift_env(scm, "e1", 1.0, 0.0),
        shift_env(scm, "e2", -1.0, 0.0),
    ])
    .and_then(|f| f.with_training(&["e0", "e1", "e2"]))
    .and_then(|f| f.with_reference("e0"))
    .expect("shift family")
}

/// Three environments changing the intervened mechanisms' noise scales and
/// coefficients without moving covariate means. Invariant subsets stay
/// invariant and residual ANOVA keeps its nominal level, so this family
/// drives the calibration sweeps.
pub fn fig2_scale_family() -> EnvironmentFamily {
    EnvironmentFamily::new(vec![
        Environment::base("e0").with_params(vec![0.0]),
        Environment::base("e1")
            .with_override("X1", Mechanism::linear(&[("X2", 1.1)], 0.0, 0.6))
            .with_params(vec![1.0]),
        Environment::base("e2")
            .with_override("X1", Mechanism::linear(&[("X2", 0.6)], 0.0, 0.5))
            .with_override("X4", Mechanism::linear(&[("Y", 1.4), ("X2", 0.55)], 0.0, 0.6))
            .with_params(vec![2.0]),
    ])
    .and_then(|f| f.with_training(&["e0", "e1", "e2"]))
    .and_then(|f| f.with_reference("e0"))
    .expect("scale family")
}

/// Three environments shifting both intervened mechanisms; every subset
/// touching `X4` or `X5` is non-invariant here.
pub fn fig2_learning_family(scm: &Scm) -> EnvironmentFamily {
    EnvironmentFamily::new(vec![
        shift_env(scm, "e0", 0.0, 0.0),
        shift_env(scm, "e1", 1.0, 1.0),
        shift_env(scm, "e2", -1.0, 1.5),
    ])
    .and_then(|f| f.with_training(&["e0", "e1", "e2"]))
    .and_then(|f| f.with_reference("e0"))
    .expect("learning family")
}

fn fig2_mechanisms_nonlinear() -> Vec<(&'static str, Mechanism)> {
    let g = NoiseDist::standard_gaussian;
    vec![
        ("X2", Mechanism::expression(&[], eps(), g())),
        (
            "X1",
            Mechanism::expression(
                &["X2"],
                add(vec![
                    scaled(0.8, tanh(var("X2"))),
                    scaled(0.6, var("X2")),
                    scaled(0.3, eps()),
                ]),
                g(),
            ),
        ),
        (
            "Y",
            Mechanism::expression(
                &["X1", "X2"],
                add(vec![
                    sin(var("X1")),
                    scaled(0.8, var("X2")),
                    mul(vec![c(0.5), var("X1"), var("X2")]),
                    scaled(0.4, eps()),
                ]),
                g(),
            ),
        ),
        (
            "X3",
            Mechanism::expression(
                &["Y"],
                add(vec![
                    tanh(scaled(1.2, var("Y"))),
                    scaled(0.45, pow(var("Y"), 2.0)),
                    scaled(0.5, eps()),
                ]),
                g(),
            ),
        ),
        (
            "X4",
            Mechanism::expression(
                &["Y", "X2"],
                add(vec![
                    scaled(2.1, tanh(var("Y"))),
                    scaled(0.9, var("Y")),
                    scaled(0.55, var("X2")),
                    mul(vec![c(0.15), var("Y"), var("X2")]),
                    scaled(0.2, eps()),
                ]),
                g(),
            ),
        ),
        (
            "X5",
            Mechanism::expression(
                &["X4"],
                add(vec![
                    scaled(1.5, tanh(var("X4"))),
                    scaled(0.75, var("X4")),
                    scaled(0.35, pow(var("X4"), 2.0)),
                    scaled(0.2, eps()),
                ]),
                g(),
            ),
        ),
    ]
}

/// Nonlinear benchmark SCM (same graph as the linear one).
pub fn fig2_nonlinear_scm() -> (Scm, EnvironmentFamily) {
    let scm = Scm::new(fig2_dag(), fig2_mechanisms_nonlinear(), Task::Regression)
        .expect("nonlinear benchmark scm is valid");
    let family = EnvironmentFamily::new(vec![Environment::base("obs")])
        .and_then(|f| f.with_training(&["obs"]))
        .and_then(|f| f.with_reference("obs"))
        .expect("single-environment family");
    (scm, family)
}

/// Nonlinear benchmark with the `X4` intervention allowed to read `X1`, `X3`.
pub fn fig2_nonlinear_scm_with_actions() -> (Scm, EnvironmentFamily) {
    let dag = fig2_dag();
    let actions = AugmentationSpec::from_labels(&dag, &[("X4", vec!["X1", "X3"])])
        .expect("action set is admissible");
    let scm = Scm::with_actions(dag, fig2_mechanisms_nonlinear(), Task::Regression, actions)
        .expect("nonlinear benchmark scm is valid");
    let family = EnvironmentFamily::new(vec![Environment::base("obs")])
        .and_then(|f| f.with_training(&["obs"]))
        .and_then(|f| f.with_reference("obs"))
        .expect("single-environment family");
    (scm, family)
}

/// Classification variant of the linear benchmark: the response is
/// thresholded at zero, downstream mechanisms read the binary response.
pub fn fig2_classification_scm() -> Scm {
    let mut mechs = fig2_mechanisms_linear();
    mechs[2] = (
        "Y",
        Mechanism::expression(
            &["X1", "X2"],
            Expr::IndGt(
                Box::new(add(vec![
                    var("X1"),
                    scaled(0.8, var("X2")),
                    scaled(0.4, eps()),
                ])),
                0.0,
            ),
            NoiseDist::standard_gaussian(),
        ),
    );
    Scm::new(fig2_dag(), mechs, Task::Classification).expect("classification variant is valid")
}

/// Four-node graph violating the star condition: both covariates are
/// children of `Y`, the intervened one sits upstream of the other.
pub fn star_dag() -> Dag {
    Dag::new(
        &["X1", "X2", "Y", "E"],
        &[("Y", "X1"), ("Y", "X2"), ("X2", "X1"), ("E", "X2")],
        "Y",
        "E",
    )
    .expect("star dag is valid")
}

/// Discrete SCM on the star DAG. `X1` copies `Y` when `X2 = 0` and flips it
/// with probability `p` when `X2 = 1`.
pub fn star_scm(p: f64) -> Scm {
    let dag = star_dag();
    let mechanisms = vec![
        ("Y", Mechanism::bernoulli(0.5)),
        (
            "X2",
            Mechanism::table(&[("Y", 2)], 2, vec![vec![0.6, 0.4], vec![0.3, 0.7]]),
        ),
        (
            "X1",
            Mechanism::table(
                &[("Y", 2), ("X2", 2)],
                2,
                vec![
                    // (y=0, x2=0): X1 = 0 surely; (y=0, x2=1): X1 = 0 w.p. 1-p.
                    vec![1.0, 0.0],
                    vec![1.0 - p, p],
                    // (y=1, x2=0): X1 = 1 surely; (y=1, x2=1): X1 = 1 w.p. 1-p.
                    vec![0.0, 1.0],
                    vec![p, 1.0 - p],
                ],
            ),
        ),
    ];
    Scm::new(dag, mechanisms, Task::Classification).expect("star scm is valid")
}

/// Grid of three strong interventions setting `P(X2 = 1) = q`.
pub fn star_family() -> EnvironmentFamily {
    let q_env = |label: &str, q: f64| {
        Environment::base(label)
            .with_override("X2", Mechanism::bernoulli(q))
            .with_params(vec![q])
    };
    let mut family = EnvironmentFamily::new(vec![
        q_env("q0", 0.0),
        q_env("q0.5", 0.5),
        q_env("q1", 1.0),
    ])
    .and_then(|f| f.with_reference("q0.5"))
    .expect("star family");
    family.param_scale = Some(vec![1.0]);
    family
}

/// Binary SCM contrasting subset invariance with representation-level
/// invariance: `X1` drives `Y`, `X2` is a noisy copy of `Y`, and the flip
/// rates move with the environment.
pub fn irm_b1_scm() -> (Scm, EnvironmentFamily) {
    let dag = Dag::new(
        &["X1", "X2", "Y", "E"],
        &[("X1", "Y"), ("Y", "X2"), ("E", "X1"), ("E", "X2")],
        "Y",
        "E",
    )
    .expect("valid dag");
    let y_table = Mechanism::table(&[("X1", 2)], 2, vec![vec![0.75, 0.25], vec![0.25, 0.75]]);
    let scm = Scm::new(
        dag,
        vec![
            ("X1", Mechanism::bernoulli(0.1)),
            ("Y", y_table),
            ("X2", flip_table(0.1)),
        ],
        Task::Classification,
    )
    .expect("valid scm");
    let env = |e: u32| {
        let q = e as f64 / 10.0;
        Environment::base(&format!("e{e}"))
            .with_override("X1", Mechanism::bernoulli(q))
            .with_override("X2", flip_table(q))
            .with_params(vec![e as f64])
    };
    let family = EnvironmentFamily::new(vec![env(1), env(2), env(3), env(8)])
        .and_then(|f| f.with_training(&["e1", "e2", "e3"]))
        .and_then(|f| f.with_reference("e1"))
        .expect("valid family");
    (scm, family)
}

/// `X2 = Y` flipped with probability `q`.
fn flip_table(q: f64) -> Mechanism {
    Mechanism::table(&[("Y", 2)], 2, vec![vec![1.0 - q, q], vec![q, 1.0 - q]])
}

/// Three-node linear SCM in which a derived feature is invariant across the
/// training environments but breaks under strong interventions on `X1`.
pub fn strict_b2_dag() -> Dag {
    Dag::new(
        &["X1", "X2", "Y", "E"],
        &[("Y", "X1"), ("E", "X1"), ("E", "X2")],
        "Y",
        "E",
    )
    .expect("valid dag")
}

/// The SCM on [`strict_b2_dag`]: `Y = eps_Y`, `X1 = Y + eps_1`, `X2 = eps_2`,
/// with strong-intervention environments replacing `X1` by fresh noise and
/// shifting `X2` by `delta`.
pub fn strict_b2_scm() -> (Scm, EnvironmentFamily) {
    let dag = strict_b2_dag();
    let scm = Scm::new(
        dag,
        vec![
            ("Y", Mechanism::linear(&[], 0.0, 1.0)),
            ("X1", Mechanism::linear(&[("Y", 1.0)], 0.0, 1.0)),
            ("X2", Mechanism::linear(&[], 0.0, 1.0)),
        ],
        Task::Regression,
    )
    .expect("valid scm");
    let strong = |label: &str, delta: f64| {
        Environment::base(label)
            .with_override("X1", Mechanism::linear(&[], 0.0, 1.0))
            .with_override("X2", Mechanism::linear(&[], delta, 1.0))
            .with_params(vec![delta])
    };
    let family = EnvironmentFamily::new(vec![
        Environment::base("train").with_params(vec![0.0]),
        strong("strong0", 0.0),
        strong("strong1", 1.0),
        strong("strong2", 2.0),
    ])
    .and_then(|f| f.with_training(&["train"]))
    .and_then(|f| f.with_reference("train"))
    .expect("valid family");
    (scm, family)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{self, NodeSet};

    #[test]
    fn benchmark_graph_quantities() {
        let dag = fig2_dag();
        let sb = graph::stable_blanket(&dag);
        assert_eq!(sb, NodeSet::from_labels(&dag, &["X1", "X2", "X3"]).unwrap());
    }

    #[test]
    fn families_validate_against_scms() {
        let (scm, base) = fig2_linear_scm();
        scm.validate_family(&base).unwrap();
        scm.validate_family(&fig2_scale_family()).unwrap();
        scm.validate_family(&fig2_shift_family(&scm)).unwrap();
        scm.validate_family(&fig2_learning_family(&scm)).unwrap();

        let star = star_scm(0.25);
        star.validate_family(&star_family()).unwrap();

        let (b1, fam) = irm_b1_scm();
        b1.validate_family(&fam).unwrap();

        let (b2, fam) = strict_b2_scm();
        b2.validate_family(&fam).unwrap();
    }
}
