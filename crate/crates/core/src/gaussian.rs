//! Closed-form analytics for linear-Gaussian SCMs.
//!
//! A [`LinearScmView`] reduces a linear SCM to per-environment structural
//! coefficients, shifts, and noise variances, from which joint moments,
//! population subset regressions, and exact risks of affine predictors
//! follow in closed form.

use nalgebra::{DMatrix, DVector};
use rand::RngExt;

use crate::error::{Error, Result};
use crate::graph::{check_star_condition, stable_blanket, Dag, NodeSet};
use crate::rng;
use crate::scm::{EnvironmentFamily, Mechanism, PolicyShape, Scm};

const COND_LIMIT: f64 = 1e10;
const JITTER_SCALE: f64 = 1e-10;

/// Structural data for one environment: `x = B x + shift + eps`,
/// `Var(eps) = diag(noise_var)`.
#[derive(Debug, Clone)]
pub struct LinearEnv {
    pub label: String,
    pub coeff: DMatrix<f64>,
    pub shift: DVector<f64>,
    pub noise_var: DVector<f64>,
}

/// A linear SCM over the covariates plus the response (last index),
/// with one [`LinearEnv`] per environment.
#[derive(Debug, Clone)]
pub struct LinearScmView {
    /// Covariate labels; the response occupies index `columns.len()`.
    pub columns: Vec<String>,
    envs: Vec<LinearEnv>,
}

/// An affine predictor over covariate columns.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AffinePredictor {
    /// Covariate column indices the predictor reads.
    pub cols: Vec<usize>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Set when the normal equations needed a ridge fallback.
    pub regularized: bool,
}

impl AffinePredictor {
    pub fn constant(value: f64) -> Self {
        AffinePredictor {
            cols: Vec::new(),
            weights: Vec::new(),
            intercept: value,
            regularized: false,
        }
    }

    pub fn new(cols: Vec<usize>, weights: Vec<f64>, intercept: f64) -> Self {
        AffinePredictor {
            cols,
            weights,
            intercept,
            regularized: false,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut acc = self.intercept;
        for (c, w) in self.cols.iter().zip(&self.weights) {
            acc += w * x[*c];
        }
        acc
    }

    /// Dense weight vector over all `d` covariates.
    pub fn dense_weights(&self, d: usize) -> DVector<f64> {
        let mut w = DVector::zeros(d);
        for (c, wi) in self.cols.iter().zip(&self.weights) {
            w[*c] = *wi;
        }
        w
    }
}

fn fill_linear_row(
    dag: &Dag,
    mech: &Mechanism,
    row: usize,
    coeff: &mut DMatrix<f64>,
    shift: &mut DVector<f64>,
    noise_var: &mut DVector<f64>,
    node_col: &impl Fn(usize) -> usize,
) -> Result<()> {
    match mech {
        Mechanism::LinearGaussian {
            parents,
            coefficients,
            intercept,
            noise_std,
        } => {
            for (p, c) in parents.iter().zip(coefficients) {
                let pid = dag.node_id(p)?;
                coeff[(row, node_col(pid))] = *c;
            }
            shift[row] = *intercept;
            noise_var[row] = noise_std * noise_std;
            Ok(())
        }
        Mechanism::PointMass { value } => {
            shift[row] = *value;
            noise_var[row] = 0.0;
            Ok(())
        }
        Mechanism::Perturbed { base, policy } => {
            if policy.shape != PolicyShape::Constant {
                return Err(Error::Unsupported(
                    "only constant perturbations have a linear view".into(),
                ));
            }
            fill_linear_row(dag, base, row, coeff, shift, noise_var, node_col)?;
            shift[row] += policy.output(&[]);
            Ok(())
        }
        _ => Err(Error::Unsupported(
            "mechanism is not linear-Gaussian".into(),
        )),
    }
}

impl LinearScmView {
    /// Extracts the per-environment linear structure from an SCM whose
    /// effective mechanisms are all linear-Gaussian (point masses and
    /// constant-shift perturbations included).
    pub fn from_scm(scm: &Scm, family: &EnvironmentFamily) -> Result<Self> {
        let dag = scm.dag();
        let d = dag.covariates().len();
        let node_col = |id: usize| -> usize {
            if id == dag.response() {
                d
            } else {
                dag.covariate_index(id).expect("covariate")
            }
        };

        let mut envs = Vec::new();
        for env in family.environments() {
            let mut coeff = DMatrix::zeros(d + 1, d + 1);
            let mut shift = DVector::zeros(d + 1);
            let mut noise_var = DVector::zeros(d + 1);
            for &id in scm.sample_order() {
                let row = node_col(id);
                let mech = scm.effective_mechanism(env, id);
                fill_linear_row(dag, mech, row, &mut coeff, &mut shift, &mut noise_var, &node_col)
                    .map_err(|e| {
                        Error::Unsupported(format!(
                            "node `{}` in environment `{}`: {e}",
                            dag.label(id),
                            env.label
                        ))
                    })?;
            }
            envs.push(LinearEnv {
                label: env.label.clone(),
                coeff,
                shift,
                noise_var,
            });
        }
        Ok(LinearScmView {
            columns: dag
                .covariates()
                .iter()
                .map(|&c| dag.label(c).to_string())
                .collect(),
            envs,
        })
    }

    pub fn from_envs(columns: Vec<String>, envs: Vec<LinearEnv>) -> Result<Self> {
        if envs.is_empty() {
            return Err(Error::input("view needs at least one environment"));
        }
        let n = columns.len() + 1;
        for e in &envs {
            if e.coeff.nrows() != n || e.coeff.ncols() != n || e.shift.len() != n {
                return Err(Error::validation("environment dimensions mismatch"));
            }
            if e.noise_var.iter().any(|&v| v < 0.0) {
                return Err(Error::validation("noise variances must be >= 0"));
            }
        }
        Ok(LinearScmView { columns, envs })
    }

    pub fn env_labels(&self) -> Vec<&str> {
        self.envs.iter().map(|e| e.label.as_str()).collect()
    }

    pub fn env(&self, label: &str) -> Result<&LinearEnv> {
        self.envs
            .iter()
            .find(|e| e.label == label)
            .ok_or_else(|| Error::input(format!("unknown environment `{label}`")))
    }

    /// Number of covariates.
    pub fn d(&self) -> usize {
        self.columns.len()
    }

    /// Mean and covariance of `(X, Y)` (response last) under `env`.
    pub fn joint_moments(&self, env: &str) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let e = self.env(env)?;
        let n = e.coeff.nrows();
        let m = DMatrix::identity(n, n) - &e.coeff;
        let inv = m.try_inverse().ok_or_else(|| Error::Numeric {
            node: "joint".into(),
            message: "I - B is singular; the view is not acyclic".into(),
        })?;
        let mean = &inv * &e.shift;
        let omega = DMatrix::from_diagonal(&e.noise_var);
        let cov = &inv * omega * inv.transpose();
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok((mean, cov))
    }

    /// Moments of the mixture over environments with the given weights.
    pub fn mixture_moments(
        &self,
        weights: &[(String, f64)],
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        if weights.is_empty() || total <= 0.0 {
            return Err(Error::input("mixture weights must be positive"));
        }
        let n = self.d() + 1;
        let mut mean = DVector::zeros(n);
        let mut second = DMatrix::zeros(n, n);
        for (label, w) in weights {
            let (mu, cov) = self.joint_moments(label)?;
            let w = w / total;
            second += (cov + &mu * mu.transpose()) * w;
            mean += mu * w;
        }
        let cov = second - &mean * mean.transpose();
        Ok((mean.clone(), (&cov + cov.transpose()) * 0.5))
    }

    /// The population affine regression of `Y` on the covariate subset `S`
    /// under `env`: the risk-minimizing affine function of `X_S`.
    pub fn population_regression(
        &self,
        env: &str,
        s: &NodeSet,
        dag: &Dag,
    ) -> Result<AffinePredictor> {
        let cols: Vec<usize> = s
            .iter()
            .map(|id| {
                dag.covariate_index(id)
                    .ok_or_else(|| Error::input("subset member is not a covariate"))
            })
            .collect::<Result<_>>()?;
        self.population_regression_cols(env, &cols)
    }

    /// Same as [`population_regression`](Self::population_regression) but
    /// with explicit covariate column indices.
    pub fn population_regression_cols(
        &self,
        env: &str,
        cols: &[usize],
    ) -> Result<AffinePredictor> {
        let (mean, cov) = self.joint_moments(env)?;
        Ok(self.regression_from_moments(&mean, &cov, cols))
    }

    pub fn regression_from_moments(
        &self,
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
        cols: &[usize],
    ) -> AffinePredictor {
        let y = self.d();
        if cols.is_empty() {
            return AffinePredictor::constant(mean[y]);
        }
        let k = cols.len();
        let sxx = DMatrix::from_fn(k, k, |i, j| cov[(cols[i], cols[j])]);
        let sxy = DVector::from_fn(k, |i, _| cov[(cols[i], y)]);
        let (w, regularized) = solve_spd(&sxx, &sxy);
        let mut intercept = mean[y];
        for (i, &c) in cols.iter().enumerate() {
            intercept -= w[i] * mean[c];
        }
        AffinePredictor {
            cols: cols.to_vec(),
            weights: w.iter().copied().collect(),
            intercept,
            regularized,
        }
    }

    /// Regression of `Y` on derived linear features `phi = F x + f0`,
    /// returned as the induced affine predictor over the raw covariates.
    pub fn regression_on_features(
        &self,
        env: &str,
        loadings: &DMatrix<f64>,
        offsets: &DVector<f64>,
    ) -> Result<AffinePredictor> {
        let (mean, cov) = self.joint_moments(env)?;
        let d = self.d();
        if loadings.ncols() != d || offsets.len() != loadings.nrows() {
            return Err(Error::input("feature loading dimensions mismatch"));
        }
        let cov_xx = cov.view((0, 0), (d, d)).into_owned();
        let cov_xy = DVector::from_fn(d, |i, _| cov[(i, d)]);
        let sff = loadings * &cov_xx * loadings.transpose();
        let sfy = loadings * &cov_xy;
        let (w_feat, regularized) = solve_spd(&sff, &sfy);
        let w_x = loadings.transpose() * &w_feat;
        let mean_x = mean.rows(0, d).into_owned();
        // Feature offsets cancel against the intercept when the predictor is
        // written over the raw covariates.
        Ok(AffinePredictor {
            cols: (0..d).collect(),
            weights: w_x.iter().copied().collect(),
            intercept: mean[d] - w_x.dot(&mean_x),
            regularized,
        })
    }

    /// Exact `E_e[(Y - f(X))^2]` of an affine predictor.
    pub fn population_risk(&self, env: &str, f: &AffinePredictor) -> Result<f64> {
        let (mean, cov) = self.joint_moments(env)?;
        Ok(risk_from_moments(&mean, &cov, self.d(), f))
    }
}

/// Squared-loss risk from joint moments of `(X, Y)`.
pub fn risk_from_moments(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    d: usize,
    f: &AffinePredictor,
) -> f64 {
    let y = d;
    let w = f.dense_weights(d);
    let mut var = cov[(y, y)];
    let mut cross = 0.0;
    for i in 0..d {
        cross += w[i] * cov[(i, y)];
    }
    var -= 2.0 * cross;
    let cov_xx = cov.view((0, 0), (d, d));
    var += (w.transpose() * cov_xx * &w)[(0, 0)];
    let mean_resid = mean[y] - w.dot(&mean.rows(0, d).into_owned()) - f.intercept;
    (var + mean_resid * mean_resid).max(0.0)
}

/// Solves `A w = b` for symmetric positive semi-definite `A` via Cholesky,
/// with a jitter fallback and a ridge fallback past the condition guard.
/// Returns the solution and whether the ridge fallback was applied.
fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, bool) {
    let k = a.nrows();
    let trace = a.trace().max(1e-300);
    if condition_number(a) <= COND_LIMIT {
        if let Some(chol) = a.clone().cholesky() {
            return (chol.solve(b), false);
        }
        let jittered = a + DMatrix::identity(k, k) * (JITTER_SCALE * trace);
        if let Some(chol) = jittered.cholesky() {
            return (chol.solve(b), false);
        }
    }
    let ridged = a + DMatrix::identity(k, k) * (1e-8 * trace / k as f64 + 1e-12);
    let chol = ridged.cholesky().expect("ridged SPD system must factor");
    (chol.solve(b), true)
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let svd = a.clone().svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// One row of a counterexample certificate.
#[derive(Debug, Clone)]
pub struct CertificateRow {
    pub env: String,
    pub risk_alternative: f64,
    pub risk_stable_blanket: f64,
}

/// Output of [`counterexample_construct`].
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub view: LinearScmView,
    pub predictor: AffinePredictor,
    pub sb_predictor: AffinePredictor,
    pub rows: Vec<CertificateRow>,
    pub passed: bool,
    /// Smallest risk advantage of the alternative across environments.
    pub min_gap: f64,
}

/// For a DAG violating the star condition, builds a linear-Gaussian SCM and
/// a predictor using a forbidden-descendant feature that beats the stable
/// blanket predictor in every environment of a strong-intervention family.
pub fn counterexample_construct(dag: &Dag, seed: u64) -> Result<Counterexample> {
    if check_star_condition(dag) {
        return Err(Error::input(
            "the star condition holds; no counterexample exists for this graph",
        ));
    }
    let d = dag.covariates().len();
    let y_col = d;
    let node_col = |id: usize| -> usize {
        if id == dag.response() {
            y_col
        } else {
            dag.covariate_index(id).expect("covariate")
        }
    };

    // The witness: a child of Y inside the forbidden set that is not itself
    // intervened.
    let (ch_int, forb) = crate::graph::forbidden_descendants(dag);
    let witness = dag
        .children_of(dag.response())
        .iter()
        .copied()
        .find(|&c| forb.contains(c) && !ch_int.contains(c))
        .expect("star violation implies such a node exists");

    let mut stream = rng::stream(seed, &[0xce]);
    for _attempt in 0..100 {
        // Nonzero coefficients for every structural edge (E excluded).
        let mut coeff = DMatrix::zeros(d + 1, d + 1);
        for (a, b) in dag.edges() {
            if a == dag.env() || b == dag.env() {
                continue;
            }
            let mag = 0.5 + stream.random::<f64>();
            let sign = if stream.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
            coeff[(node_col(b), node_col(a))] = sign * mag;
        }
        let base = LinearEnv {
            label: "obs".to_string(),
            coeff: coeff.clone(),
            shift: DVector::zeros(d + 1),
            noise_var: DVector::from_element(d + 1, 1.0),
        };

        // Strong interventions on every intervened child of Y: fresh unit
        // noise, with and without a mean shift.
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
        let envs = vec![
            base.clone(),
            strong("strong0", 0.0),
            strong("strong+", 1.0),
            strong("strong-", -1.0),
        ];
        let view = LinearScmView::from_envs(
            dag.covariates()
                .iter()
                .map(|&c| dag.label(c).to_string())
                .collect(),
            envs,
        )?;

        // Reject faithfulness-degenerate draws: graphically connected pairs
        // must show correlation.
        let (_, cov) = view.joint_moments("obs")?;
        if degenerate_draw(dag, &cov, &node_col) {
            continue;
        }

        let sb = stable_blanket(dag);
        let sb_predictor = view.population_regression("obs", &sb, dag)?;

        // Derived feature: the witness minus its non-response parent terms,
        // leaving (coefficient on Y) * Y + own noise in every environment.
        let mut loading = DVector::zeros(d);
        loading[node_col(witness)] = 1.0;
        for &p in dag.parents_of(witness) {
            if p == dag.response() || p == dag.env() {
                continue;
            }
            loading[node_col(p)] = -coeff[(node_col(witness), node_col(p))];
        }
        let sb_cols: Vec<usize> = sb
            .iter()
            .map(|id| dag.covariate_index(id).expect("covariate"))
            .collect();
        let mut feats = DMatrix::zeros(sb_cols.len() + 1, d);
        for (r, &c) in sb_cols.iter().enumerate() {
            feats[(r, c)] = 1.0;
        }
        feats.set_row(sb_cols.len(), &loading.transpose());
        let predictor =
            view.regression_on_features("obs", &feats, &DVector::zeros(sb_cols.len() + 1))?;

        let mut rows = Vec::new();
        let mut min_gap = f64::INFINITY;
        for label in view.env_labels() {
            let risk_alt = view.population_risk(label, &predictor)?;
            let risk_sb = view.population_risk(label, &sb_predictor)?;
            min_gap = min_gap.min(risk_sb - risk_alt);
            rows.push(CertificateRow {
                env: label.to_string(),
                risk_alternative: risk_alt,
                risk_stable_blanket: risk_sb,
            });
        }
        if min_gap > 1e-9 {
            return Ok(Counterexample {
                view,
                predictor,
                sb_predictor,
                rows,
                passed: true,
                min_gap,
            });
        }
    }
    Err(Error::Numeric {
        node: "counterexample".into(),
        message: "no faithful coefficient draw found in 100 attempts".into(),
    })
}

fn degenerate_draw(dag: &Dag, cov: &DMatrix<f64>, node_col: &impl Fn(usize) -> usize) -> bool {
    // d-connectivity must be judged without the environment's edges: the
    // structural coefficients cover the induced subgraph over (X, Y) only.
    let labels: Vec<&str> = (0..dag.node_count()).map(|i| dag.label(i)).collect();
    let stripped_edges: Vec<(&str, &str)> = dag
        .edges()
        .filter(|&(a, b)| a != dag.env() && b != dag.env())
        .map(|(a, b)| (labels[a], labels[b]))
        .collect();
    let stripped = Dag::new(
        &labels,
        &stripped_edges,
        dag.label(dag.response()),
        dag.label(dag.env()),
    )
    .expect("removing edges keeps the graph valid");

    for a in 0..dag.node_count() {
        for b in (a + 1)..dag.node_count() {
            if a == dag.env() || b == dag.env() {
                continue;
            }
            let separated =
                crate::graph::d_separated(&stripped, labels[a], labels[b], &NodeSet::empty())
                    .unwrap_or(true);
            if separated {
                continue;
            }
            let (i, j) = (node_col(a), node_col(b));
            let corr = cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt();
            if corr.abs() < 1e-6 {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn b2_view() -> (LinearScmView, Dag) {
        let (scm, family) = presets::strict_b2_scm();
        let dag = scm.dag().clone();
        (LinearScmView::from_scm(&scm, &family).unwrap(), dag)
    }

    #[test]
    fn moments_of_derived_example() {
        let (view, _) = b2_view();
        let (mean, cov) = view.joint_moments("train").unwrap();
        let x1 = view.columns.iter().position(|c| c == "X1").unwrap();
        let x2 = view.columns.iter().position(|c| c == "X2").unwrap();
        let y = view.d();
        assert!(mean.iter().all(|&m| m.abs() < 1e-12));
        assert!((cov[(x1, x1)] - 2.0).abs() < 1e-12);
        assert!((cov[(y, x1)] - 1.0).abs() < 1e-12);
        assert!(cov[(x1, x2)].abs() < 1e-12);
    }

    #[test]
    fn zero_coefficients_give_noise_covariance() {
        let view = LinearScmView::from_envs(
            vec!["A".into(), "B".into()],
            vec![LinearEnv {
                label: "e".into(),
                coeff: DMatrix::zeros(3, 3),
                shift: DVector::zeros(3),
                noise_var: DVector::from_column_slice(&[2.0, 3.0, 4.0]),
            }],
        )
        .unwrap();
        let (_, cov) = view.joint_moments("e").unwrap();
        assert_eq!(
            cov,
            DMatrix::from_diagonal(&DVector::from_column_slice(&[2.0, 3.0, 4.0]))
        );
    }

    #[test]
    fn derived_feature_regression_weight() {
        let (view, _) = b2_view();
        // Feature X1 - X2; optimal weight 1/3.
        let feats = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let f = view
            .regression_on_features("train", &feats, &DVector::zeros(1))
            .unwrap();
        let w1 = f.weights[0];
        let w2 = f.weights[1];
        assert!((w1 - 1.0 / 3.0).abs() < 1e-12, "w1 = {w1}");
        assert!((w2 + 1.0 / 3.0).abs() < 1e-12, "w2 = {w2}");
        assert!(f.intercept.abs() < 1e-12);
    }

    #[test]
    fn empty_subset_predicts_the_mean() {
        let (view, dag) = b2_view();
        let f = view
            .population_regression("train", &NodeSet::empty(), &dag)
            .unwrap();
        assert!(f.cols.is_empty());
        assert!(f.intercept.abs() < 1e-12);
        assert!((view.population_risk("train", &f).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn derived_example_risks() {
        let (view, _) = b2_view();
        let f = AffinePredictor::new(vec![0, 1], vec![1.0 / 3.0, -1.0 / 3.0], 0.0);
        assert!((view.population_risk("train", &f).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        for (label, delta) in [("strong0", 0.0), ("strong1", 1.0), ("strong2", 2.0)] {
            let expected = 1.0 + (2.0 + delta * delta) / 9.0;
            let got = view.population_risk(label, &f).unwrap();
            assert!(
                (got - expected).abs() < 1e-12,
                "{label}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn stable_blanket_beats_parents_on_benchmark() {
        let (scm, family) = presets::fig2_linear_scm();
        let dag = scm.dag().clone();
        let view = LinearScmView::from_scm(&scm, &family).unwrap();
        let sb = view
            .population_regression("obs", &crate::graph::stable_blanket(&dag), &dag)
            .unwrap();
        let pa = view
            .population_regression(
                "obs",
                &crate::graph::relatives(&dag, "Y", crate::graph::RelativeKind::Parents)
                    .unwrap(),
                &dag,
            )
            .unwrap();
        let r_sb = view.population_risk("obs", &sb).unwrap();
        let r_pa = view.population_risk("obs", &pa).unwrap();
        assert!((r_pa - 0.16).abs() < 1e-12, "r_pa = {r_pa}");
        assert!(r_sb < r_pa);
        // Posterior variance given the extra child: 1 / (1/0.16 + 1.44/0.25).
        assert!((r_sb - 1.0 / (6.25 + 5.76)).abs() < 1e-12, "r_sb = {r_sb}");
    }

    #[test]
    fn counterexample_on_star_violating_graph() {
        let dag = presets::star_dag();
        let out = counterexample_construct(&dag, 11).unwrap();
        assert!(out.passed);
        assert!(out.min_gap > 1e-6, "gap = {}", out.min_gap);
        assert_eq!(out.rows.len(), 4);
    }

    #[test]
    fn counterexample_rejects_star_satisfying_graph() {
        assert!(counterexample_construct(&presets::fig2_dag(), 3).is_err());
    }
}
