//! Losses, subset-restricted base learners, and ensembles.

pub mod linear;
pub mod mlp;
pub mod stumps;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scm::{Dataset, Task};

pub use linear::{fit_logistic, fit_multinomial, fit_ols, fit_ridge, AffineFit, MultinomialFit};
pub use mlp::{fit_mlp, MlpConfig, MlpModel};
pub use stumps::{fit_forest, StumpForest};

/// Classification outputs are clipped into `[CLIP_EPS, 1 - CLIP_EPS]` so the
/// log loss stays finite.
pub const CLIP_EPS: f64 = 1e-6;

pub fn clip_prob(q: f64) -> f64 {
    q.clamp(CLIP_EPS, 1.0 - CLIP_EPS)
}

/// Losses strictly consistent for the mean functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Squared,
    Brier,
    Log,
}

/// Pointwise loss `l(y, q)`.
pub fn eval_loss(loss: Loss, y: f64, q: f64) -> f64 {
    match loss {
        Loss::Squared | Loss::Brier => (y - q) * (y - q),
        Loss::Log => {
            let mut acc = 0.0;
            if y != 0.0 {
                acc -= y * if q > 0.0 { q.ln() } else { f64::NEG_INFINITY };
            }
            if y != 1.0 {
                acc -= (1.0 - y) * if q < 1.0 { (1.0 - q).ln() } else { f64::NEG_INFINITY };
            }
            acc
        }
    }
}

/// Base learner selection.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Ols,
    Ridge { lambda: f64 },
    Logistic,
    Mlp { hidden: Vec<usize>, max_steps: usize },
    Stumps { trees: usize, depth: usize },
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    pub seed: u64,
}

impl LearnerConfig {
    /// Ridge for regression, logistic for classification.
    pub fn default_for(task: Task) -> Self {
        let kind = match task {
            Task::Regression => LearnerKind::Ridge { lambda: 1e-6 },
            Task::Classification => LearnerKind::Logistic,
        };
        LearnerConfig { kind, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
enum FittedModel {
    Affine(AffineFit),
    Logistic(AffineFit),
    Mlp(MlpModel),
    Forest(StumpForest),
    Constant(f64),
}

/// A prediction function restricted to a covariate subset.
#[derive(Debug, Clone, Serialize)]
pub struct SubsetPredictor {
    /// Covariate column indices the predictor reads, in fit order.
    pub cols: Vec<usize>,
    /// Labels of those columns.
    pub labels: Vec<String>,
    pub task: Task,
    pub kind: LearnerKind,
    model: FittedModel,
    /// Fit anomalies: ridge fallback, iteration caps, degenerate classes.
    pub flags: Vec<String>,
}

/// Anything that maps a full covariate row to an action.
pub trait Predict: Sync {
    fn predict_row(&self, x: &[f64]) -> f64;
}

impl SubsetPredictor {
    /// A constant predictor (used as the no-invariant-subset fallback).
    pub fn constant(task: Task, value: f64) -> Self {
        SubsetPredictor {
            cols: Vec::new(),
            labels: Vec::new(),
            task,
            kind: LearnerKind::Ols,
            model: FittedModel::Constant(value),
            flags: Vec::new(),
        }
    }

    fn raw_predict(&self, sub: &[f64]) -> f64 {
        match &self.model {
            FittedModel::Affine(f) => f.linear_predictor(sub),
            FittedModel::Logistic(f) => linear::sigmoid(f.linear_predictor(sub)),
            FittedModel::Mlp(m) => m.predict(sub),
            FittedModel::Forest(f) => f.predict(sub),
            FittedModel::Constant(v) => *v,
        }
    }

    /// Serialized dump of the fitted parameters (for audit).
    pub fn dump_json(&self) -> serde_json::Value {
        serde_json::json!({
            "learner": self.kind,
            "subset": self.labels,
            "flags": self.flags,
            "model": serde_json::to_value(&self.model).unwrap_or(serde_json::Value::Null),
        })
    }
}

impl Predict for SubsetPredictor {
    fn predict_row(&self, x: &[f64]) -> f64 {
        let sub: Vec<f64> = self.cols.iter().map(|&c| x[c]).collect();
        let raw = self.raw_predict(&sub);
        match self.task {
            Task::Classification => clip_prob(raw),
            Task::Regression => raw,
        }
    }
}

impl Predict for crate::gaussian::AffinePredictor {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.predict(x)
    }
}

impl Predict for crate::scm::enumerate::ExactConditional {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.predict(x)
    }
}

/// Wraps a plain function as a predictor.
pub struct FnPredictor<F: Fn(&[f64]) -> f64 + Sync>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> Predict for FnPredictor<F> {
    fn predict_row(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// A convex combination of subset predictors.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    members: Vec<(SubsetPredictor, f64)>,
    pub flags: Vec<String>,
}

impl EnsembleModel {
    pub fn new(members: Vec<(SubsetPredictor, f64)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::input("ensemble needs at least one member"));
        }
        let total: f64 = members.iter().map(|(_, w)| w).sum();
        if members.iter().any(|(_, w)| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::validation(
                "ensemble weights must be nonnegative and sum to 1",
            ));
        }
        let task = members[0].0.task;
        if members
            .iter()
            .any(|(m, w)| *w > 0.0 && m.task != task)
        {
            return Err(Error::validation("ensemble members must share the task"));
        }
        Ok(EnsembleModel {
            members,
            flags: Vec::new(),
        })
    }

    pub fn members(&self) -> &[(SubsetPredictor, f64)] {
        &self.members
    }
}

impl Predict for EnsembleModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.members
            .iter()
            .map(|(m, w)| w * m.predict_row(x))
            .sum()
    }
}

/// Fits a subset predictor on the pooled rows of `data`.
///
/// `cols` are covariate column indices; the returned predictor reads only
/// those columns. Deterministic given `(data, config)`.
pub fn fit(data: &Dataset, cols: &[usize], config: &LearnerConfig) -> Result<SubsetPredictor> {
    let n = data.n();
    for &c in cols {
        if c >= data.d() {
            return Err(Error::input(format!("column index {c} out of range")));
        }
    }
    if n < 2 * (cols.len() + 1) {
        return Err(Error::input(format!(
            "need at least {} rows to fit {} columns, have {n}",
            2 * (cols.len() + 1),
            cols.len()
        )));
    }
    let x = DMatrix::from_fn(n, cols.len(), |i, j| data.x[(i, cols[j])]);
    let y = &data.y;
    let labels: Vec<String> = cols.iter().map(|&c| data.columns[c].clone()).collect();
    let mut flags = Vec::new();

    if data.task == Task::Classification {
        let ones = y.iter().filter(|&&v| v == 1.0).count();
        if ones == 0 || ones == n {
            flags.push("single-class".to_string());
            let value = clip_prob(ones as f64 / n as f64);
            let mut p = SubsetPredictor::constant(Task::Classification, value);
            p.flags = flags;
            return Ok(p);
        }
    }

    let model = match &config.kind {
        LearnerKind::Ols => {
            let f = fit_ols(&x, y);
            if f.regularized {
                flags.push("ridge-fallback".to_string());
            }
            FittedModel::Affine(f)
        }
        LearnerKind::Ridge { lambda } => {
            let f = fit_ridge(&x, y, *lambda);
            if f.regularized {
                flags.push("ridge-fallback".to_string());
            }
            FittedModel::Affine(f)
        }
        LearnerKind::Logistic => {
            if data.task != Task::Classification {
                return Err(Error::input("logistic learner needs a classification task"));
            }
            let (f, fit_flags) = fit_logistic(&x, y)?;
            if !fit_flags.converged {
                flags.push("max-iterations".to_string());
            }
            if fit_flags.separation_suspected {
                flags.push("separation-suspected".to_string());
            }
            FittedModel::Logistic(f)
        }
        LearnerKind::Mlp { hidden, max_steps } => {
            let mut mlp_config = MlpConfig::default();
            mlp_config.hidden = hidden.clone();
            mlp_config.max_steps = *max_steps;
            FittedModel::Mlp(fit_mlp(&x, y, data.task, &mlp_config, config.seed))
        }
        LearnerKind::Stumps { trees, depth } => {
            FittedModel::Forest(fit_forest(&x, y, *trees, *depth, config.seed))
        }
    };
    Ok(SubsetPredictor {
        cols: cols.to_vec(),
        labels,
        task: data.task,
        kind: config.kind.clone(),
        model,
        flags,
    })
}

/// Mean loss of a predictor over `data`, optionally restricted to one
/// environment.
pub fn empirical_risk(
    data: &Dataset,
    f: &dyn Predict,
    loss: Loss,
    env_filter: Option<u32>,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    let mut row = vec![0.0; data.d()];
    for i in 0..data.n() {
        if let Some(e) = env_filter {
            if data.env[i] != e {
                continue;
            }
        }
        for j in 0..data.d() {
            row[j] = data.x[(i, j)];
        }
        total += eval_loss(loss, data.y[i], f.predict_row(&row));
        count += 1;
    }
    if count == 0 {
        return Err(Error::input("empirical risk over an empty selection"));
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::RngExt;
    use rand_distr::{Distribution, StandardNormal};

    fn linear_data(n: usize, seed: u64) -> Dataset {
        let mut rng = rng::stream(seed, &[1]);
        let x = DMatrix::from_fn(n, 2, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                2.0 * x[(i, 0)] + 0.1 * z
            })
            .collect();
        Dataset::new(
            vec!["A".into(), "B".into()],
            x,
            y,
            vec!["e".into()],
            vec![0; n],
            Task::Regression,
        )
        .unwrap()
    }

    #[test]
    fn loss_values() {
        assert_eq!(eval_loss(Loss::Brier, 1.0, 0.5), 0.25);
        assert_eq!(eval_loss(Loss::Squared, 0.7, 0.7), 0.0);
        let q = 1.0 - CLIP_EPS;
        assert!((eval_loss(Loss::Log, 1.0, q) + q.ln()).abs() < 1e-15);
        assert!(eval_loss(Loss::Log, 1.0, 0.0).is_infinite());
        assert_eq!(eval_loss(Loss::Log, 1.0, 1.0), 0.0);
    }

    #[test]
    fn ols_consistency() {
        let data = linear_data(10_000, 3);
        let f = fit(&data, &[0], &LearnerConfig::default_for(Task::Regression)).unwrap();
        let dump = f.dump_json();
        let w = dump["model"]["Affine"]["weights"][0].as_f64().unwrap();
        assert!((w - 2.0).abs() < 0.05, "w = {w}");
    }

    #[test]
    fn empty_subset_fits_pooled_mean() {
        let data = linear_data(100, 4);
        let f = fit(&data, &[], &LearnerConfig::default_for(Task::Regression)).unwrap();
        let mean = data.y.iter().sum::<f64>() / data.n() as f64;
        assert!((f.predict_row(&[5.0, -3.0]) - mean).abs() < 1e-12);
    }

    #[test]
    fn predictions_ignore_columns_outside_subset() {
        let data = linear_data(500, 5);
        let f = fit(&data, &[0], &LearnerConfig::default_for(Task::Regression)).unwrap();
        let a = f.predict_row(&[1.0, 100.0]);
        let b = f.predict_row(&[1.0, -777.0]);
        assert_eq!(a, b);
    }

    #[test]
    fn ensemble_is_a_convex_combination() {
        let a = SubsetPredictor::constant(Task::Classification, 0.2);
        let b = SubsetPredictor::constant(Task::Classification, 0.6);
        let ens = EnsembleModel::new(vec![(a, 0.5), (b, 0.5)]).unwrap();
        assert!((ens.predict_row(&[]) - 0.4).abs() < 1e-15);

        let single =
            EnsembleModel::new(vec![(SubsetPredictor::constant(Task::Regression, 1.25), 1.0)])
                .unwrap();
        assert_eq!(single.predict_row(&[]), 1.25);

        let bad = EnsembleModel::new(vec![(
            SubsetPredictor::constant(Task::Regression, 0.0),
            0.5,
        )]);
        assert!(bad.is_err());
    }

    #[test]
    fn risk_of_perfect_predictions_is_zero() {
        let data = linear_data(50, 6);
        let perfect = FnPredictor(|x: &[f64]| 2.0 * x[0]);
        let risk = empirical_risk(&data, &perfect, Loss::Squared, None).unwrap();
        assert!(risk < 0.02, "risk = {risk}");
        let exact = FnPredictor(|x: &[f64]| x[1]);
        let data_exact = Dataset::new(
            data.columns.clone(),
            data.x.clone(),
            (0..data.n()).map(|i| data.x[(i, 1)]).collect(),
            data.env_labels.clone(),
            data.env.clone(),
            Task::Regression,
        )
        .unwrap();
        assert_eq!(
            empirical_risk(&data_exact, &exact, Loss::Squared, None).unwrap(),
            0.0
        );
    }

    #[test]
    fn empty_env_filter_is_an_error() {
        let data = linear_data(10, 7);
        let f = fit(&data, &[], &LearnerConfig::default_for(Task::Regression)).unwrap();
        assert!(empirical_risk(&data, &f, Loss::Squared, Some(3)).is_err());
    }

    #[test]
    fn minimizing_constant_equals_the_mean() {
        // Strict consistency sanity check over random discrete response laws.
        let mut rng = rng::stream(9, &[2]);
        for trial in 0..50 {
            let k = 2 + (trial % 3);
            let support: Vec<f64> = (0..k).map(|j| j as f64 / (k - 1) as f64).collect();
            let mut probs: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
            let total: f64 = probs.iter().sum();
            for p in probs.iter_mut() {
                *p /= total;
            }
            let mean: f64 = support.iter().zip(&probs).map(|(v, p)| v * p).sum();
            for loss in [Loss::Squared, Loss::Brier, Loss::Log] {
                let mut best_q = f64::NAN;
                let mut best_val = f64::INFINITY;
                let steps = 10_000;
                for s in 0..=steps {
                    let q = s as f64 / steps as f64;
                    let q = if loss == Loss::Log { q.clamp(1e-4, 1.0 - 1e-4) } else { q };
                    let val: f64 = support
                        .iter()
                        .zip(&probs)
                        .map(|(y, p)| p * eval_loss(loss, *y, q))
                        .sum();
                    if val < best_val {
                        best_val = val;
                        best_q = q;
                    }
                }
                assert!(
                    (best_q - mean).abs() <= 2e-4,
                    "loss {loss:?}: argmin {best_q} vs mean {mean}"
                );
            }
        }
    }
}
