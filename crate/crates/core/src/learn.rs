//! Subset search: screening, invariant-most-predictive selection, and the
//! two-stage stabilized ensemble.
//!
//! Stage 1 keeps subsets whose invariance score (test p-value) clears
//! `alpha_inv`; stage 2 keeps those whose out-of-sample prediction score
//! clears a bootstrap cutoff calibrated on the best subset, and averages
//! them uniformly.

use nalgebra::DMatrix;
use rand::RngExt;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::invariance::{self, TestKind};
use crate::predictors::{self, EnsembleModel, LearnerConfig, Loss, SubsetPredictor};
use crate::rng;
use crate::scm::{Dataset, Task};
use crate::stats;

/// Hard cap on exhaustive enumeration; beyond this screening is mandatory.
pub const MAX_ENUM_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Screening {
    None,
    L1 { k: usize },
}

#[derive(Debug, Clone)]
pub struct SubsetSearchConfig {
    pub alpha_inv: f64,
    pub alpha_pred: f64,
    pub bootstrap: usize,
    pub test: TestKind,
    pub learner: LearnerConfig,
    pub screening: Screening,
    pub max_subset_size: Option<usize>,
    pub seed: u64,
}

impl SubsetSearchConfig {
    pub fn new(task: Task, test: TestKind, seed: u64) -> Self {
        SubsetSearchConfig {
            alpha_inv: 0.05,
            alpha_pred: 0.05,
            bootstrap: 250,
            test,
            learner: LearnerConfig::default_for(task),
            screening: Screening::None,
            max_subset_size: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_inv > 0.0 && self.alpha_inv < 1.0) {
            return Err(Error::input("alpha_inv must lie in (0,1)"));
        }
        if !(self.alpha_pred > 0.0 && self.alpha_pred < 1.0) {
            return Err(Error::input("alpha_pred must lie in (0,1)"));
        }
        if self.bootstrap < 10 {
            return Err(Error::input("bootstrap count must be >= 10"));
        }
        Ok(())
    }
}

/// Variable screening; returns the kept covariate columns.
pub fn screen(data: &Dataset, config: &SubsetSearchConfig) -> Result<(Vec<usize>, Vec<String>)> {
    let d = data.d();
    match &config.screening {
        Screening::None => Ok(((0..d).collect(), Vec::new())),
        Screening::L1 { k } => {
            if *k == 0 {
                return Err(Error::input("screening needs k >= 1"));
            }
            if *k >= d {
                return Ok((
                    (0..d).collect(),
                    vec![format!("screening k={k} >= d={d}; keeping all columns")],
                ));
            }
            let cols = l1_path_topk(data, *k)?;
            Ok((cols, Vec::new()))
        }
    }
}

/// Top-k covariates by the L1 path: the coefficients at the largest penalty
/// retaining k nonzeros.
fn l1_path_topk(data: &Dataset, k: usize) -> Result<Vec<usize>> {
    let n = data.n();
    let d = data.d();
    // Standardize columns; center the response.
    let mut x = data.x.clone();
    for j in 0..d {
        let mean = x.column(j).sum() / n as f64;
        let sd = (x.column(j).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64)
            .sqrt()
            .max(1e-12);
        for i in 0..n {
            x[(i, j)] = (x[(i, j)] - mean) / sd;
        }
    }
    let y_mean = data.y.iter().sum::<f64>() / n as f64;
    let y: Vec<f64> = data.y.iter().map(|v| v - y_mean).collect();
    let logistic = data.task == Task::Classification;

    let lambda_max = (0..d)
        .map(|j| (0..n).map(|i| x[(i, j)] * y[i]).sum::<f64>().abs() / n as f64)
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let grid: Vec<f64> = (0..60)
        .map(|t| lambda_max * (1e-3f64).powf(t as f64 / 59.0))
        .collect();

    let mut w = vec![0.0f64; d];
    for &lambda in &grid {
        if logistic {
            ista_logistic(&x, &data.y, lambda, &mut w);
        } else {
            coordinate_lasso(&x, &y, lambda, &mut w);
        }
        let nnz = w.iter().filter(|v| v.abs() > 1e-9).count();
        if nnz >= k {
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| w[b].abs().partial_cmp(&w[a].abs()).unwrap());
            let mut kept: Vec<usize> = order.into_iter().take(k).collect();
            kept.sort_unstable();
            return Ok(kept);
        }
    }
    // Path never reached k active columns; keep the strongest marginals.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        let ca = (0..n).map(|i| x[(i, a)] * y[i]).sum::<f64>().abs();
        let cb = (0..n).map(|i| x[(i, b)] * y[i]).sum::<f64>().abs();
        cb.partial_cmp(&ca).unwrap()
    });
    let mut kept: Vec<usize> = order.into_iter().take(k).collect();
    kept.sort_unstable();
    Ok(kept)
}

fn coordinate_lasso(x: &DMatrix<f64>, y: &[f64], lambda: f64, w: &mut [f64]) {
    let n = x.nrows();
    let d = x.ncols();
    let mut fitted: Vec<f64> = (0..n)
        .map(|i| (0..d).map(|j| x[(i, j)] * w[j]).sum())
        .collect();
    for _sweep in 0..200 {
        let mut max_change = 0.0f64;
        for j in 0..d {
            let rho = (0..n)
                .map(|i| x[(i, j)] * (y[i] - fitted[i] + x[(i, j)] * w[j]))
                .sum::<f64>()
                / n as f64;
            let new = soft_threshold(rho, lambda);
            let delta = new - w[j];
            if delta != 0.0 {
                for i in 0..n {
                    fitted[i] += x[(i, j)] * delta;
                }
                max_change = max_change.max(delta.abs());
                w[j] = new;
            }
        }
        if max_change < 1e-7 {
            break;
        }
    }
}

fn ista_logistic(x: &DMatrix<f64>, y: &[f64], lambda: f64, w: &mut [f64]) {
    let n = x.nrows();
    let d = x.ncols();
    let mut intercept = 0.0f64;
    let step = 4.0 / (x.iter().map(|v| v * v).sum::<f64>() / n as f64).max(1e-12) / d as f64;
    for _ in 0..300 {
        let mut grad = vec![0.0f64; d];
        let mut grad0 = 0.0f64;
        for i in 0..n {
            let eta: f64 = intercept + (0..d).map(|j| x[(i, j)] * w[j]).sum::<f64>();
            let r = predictors::linear::sigmoid(eta) - y[i];
            grad0 += r;
            for j in 0..d {
                grad[j] += r * x[(i, j)];
            }
        }
        intercept -= step * grad0 / n as f64;
        let mut max_change = 0.0f64;
        for j in 0..d {
            let new = soft_threshold(w[j] - step * grad[j] / n as f64, step * lambda);
            max_change = max_change.max((new - w[j]).abs());
            w[j] = new;
        }
        if max_change < 1e-7 {
            break;
        }
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// All candidate subsets (including the empty set) of the given columns.
pub fn enumerate_subsets(cols: &[usize], max_size: Option<usize>) -> Result<Vec<Vec<usize>>> {
    if cols.len() > MAX_ENUM_DIM {
        return Err(Error::Resource(format!(
            "{} columns exceed the enumeration cap of {MAX_ENUM_DIM}; enable screening",
            cols.len()
        )));
    }
    let cap = max_size.unwrap_or(cols.len());
    let mut out = Vec::new();
    for mask in 0u32..(1 << cols.len()) {
        if (mask.count_ones() as usize) <= cap {
            let subset: Vec<usize> = (0..cols.len())
                .filter(|&j| mask >> j & 1 == 1)
                .map(|j| cols[j])
                .collect();
            out.push(subset);
        }
    }
    // Smaller subsets first, lexicographic within a size.
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(out)
}

/// One candidate's scores.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SubsetScore {
    pub cols: Vec<usize>,
    pub labels: Vec<String>,
    pub s_inv: f64,
    pub retained: bool,
    pub error: Option<String>,
}

fn subset_seed(master: u64, cols: &[usize]) -> u64 {
    let tags: Vec<u64> = cols.iter().map(|&c| c as u64 + 1).collect();
    rng::derive(master, &tags)
}

/// Stage 1: invariance scores for every candidate; failures are recorded and
/// treated as rejections.
pub fn invariant_subsets(
    data: &Dataset,
    candidates: &[Vec<usize>],
    config: &SubsetSearchConfig,
) -> Result<Vec<SubsetScore>> {
    config.validate()?;
    if candidates.is_empty() {
        return Err(Error::input("candidate list must be nonempty"));
    }
    Ok(candidates
        .par_iter()
        .map(|cols| {
            let seed = subset_seed(config.seed, cols);
            match invariance::run_test(config.test, data, cols, &config.learner, seed) {
                Ok(report) => SubsetScore {
                    cols: cols.clone(),
                    labels: report.subset.clone(),
                    s_inv: report.p_value,
                    retained: report.p_value >= config.alpha_inv,
                    error: None,
                },
                Err(e) => SubsetScore {
                    cols: cols.clone(),
                    labels: cols.iter().map(|&c| data.columns[c].clone()).collect(),
                    s_inv: f64::NAN,
                    retained: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

/// Out-of-sample prediction score: negative MSE (regression) or negative
/// cross-entropy (classification), 5-fold cross-fit.
pub fn prediction_score(
    data: &Dataset,
    cols: &[usize],
    learner: &LearnerConfig,
    seed: u64,
) -> Result<f64> {
    let (pred, _) = invariance::crossfit_predictions(data, cols, None, learner, seed)?;
    let loss = match data.task {
        Task::Regression => Loss::Squared,
        Task::Classification => Loss::Log,
    };
    let mut total = 0.0;
    for i in 0..data.n() {
        let q = if data.task == Task::Classification {
            predictors::clip_prob(pred[i])
        } else {
            pred[i]
        };
        total += predictors::eval_loss(loss, data.y[i], q);
    }
    Ok(-total / data.n() as f64)
}

/// Output row of the learners, one per candidate subset.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LearnRow {
    pub subset: Vec<String>,
    pub s_inv: f64,
    pub s_pred: Option<f64>,
    pub passed_inv: bool,
    pub passed_pred: bool,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct ImpResult {
    pub predictor: SubsetPredictor,
    pub selected: Vec<usize>,
    pub rows: Vec<LearnRow>,
    /// Set when no subset passed the invariance filter.
    pub fallback: bool,
}

fn marginal_mean_fallback(data: &Dataset) -> SubsetPredictor {
    let mean = data.y.iter().sum::<f64>() / data.n() as f64;
    let value = match data.task {
        Task::Classification => predictors::clip_prob(mean),
        Task::Regression => mean,
    };
    let mut p = SubsetPredictor::constant(data.task, value);
    p.flags.push("no-invariant-subset".to_string());
    p
}

/// Invariant-most-predictive selection: the retained subset with the best
/// prediction score; ties break toward smaller, then lexicographic.
pub fn imp(
    data: &Dataset,
    candidates: &[Vec<usize>],
    config: &SubsetSearchConfig,
) -> Result<ImpResult> {
    let scores = invariant_subsets(data, candidates, config)?;
    let preds = score_retained(data, &scores, config)?;
    let mut rows = make_rows(&scores, &preds);

    let mut best: Option<(usize, f64)> = None;
    for (idx, score) in scores.iter().enumerate() {
        if !score.retained {
            continue;
        }
        let sp = preds[idx].expect("retained subsets are scored");
        let better = match best {
            None => true,
            Some((bidx, bsp)) => {
                sp > bsp + 1e-12
                    || ((sp - bsp).abs() <= 1e-12
                        && (score.cols.len(), &score.cols)
                            < (scores[bidx].cols.len(), &scores[bidx].cols))
            }
        };
        if better {
            best = Some((idx, sp));
        }
    }
    match best {
        None => Ok(ImpResult {
            predictor: marginal_mean_fallback(data),
            selected: Vec::new(),
            rows,
            fallback: true,
        }),
        Some((idx, _)) => {
            let cols = scores[idx].cols.clone();
            let fit = predictors::fit(data, &cols, &config.learner)?;
            for (r, s) in rows.iter_mut().zip(&scores) {
                r.weight = if s.cols == cols { 1.0 } else { 0.0 };
                r.passed_pred = s.cols == cols;
            }
            Ok(ImpResult {
                predictor: fit,
                selected: cols,
                rows,
                fallback: false,
            })
        }
    }
}

fn score_retained(
    data: &Dataset,
    scores: &[SubsetScore],
    config: &SubsetSearchConfig,
) -> Result<Vec<Option<f64>>> {
    scores
        .par_iter()
        .map(|s| {
            if !s.retained {
                return Ok(None);
            }
            let seed = rng::derive(subset_seed(config.seed, &s.cols), &[0x5c0]);
            prediction_score(data, &s.cols, &config.learner, seed).map(Some)
        })
        .collect()
}

fn make_rows(scores: &[SubsetScore], preds: &[Option<f64>]) -> Vec<LearnRow> {
    scores
        .iter()
        .zip(preds)
        .map(|(s, p)| LearnRow {
            subset: s.labels.clone(),
            s_inv: s.s_inv,
            s_pred: *p,
            passed_inv: s.retained,
            passed_pred: false,
            weight: 0.0,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct StabilizedResult {
    pub ensemble: EnsembleModel,
    pub rows: Vec<LearnRow>,
    pub cutoff: f64,
    /// Set when no subset passed the invariance filter.
    pub fallback: bool,
}

/// Environment-stratified bootstrap resample of row indices.
fn bootstrap_rows(data: &Dataset, seed: u64) -> Vec<usize> {
    let mut rng = rng::stream(seed, &[0xb007]);
    let mut rows = Vec::with_capacity(data.n());
    for e in 0..data.n_envs() as u32 {
        let env_rows = data.rows_in_env(e);
        for _ in 0..env_rows.len() {
            rows.push(env_rows[rng.random_range(0..env_rows.len())]);
        }
    }
    rows
}

/// Two-stage stabilized ensemble over the candidate subsets.
pub fn stabilized(
    data: &Dataset,
    candidates: &[Vec<usize>],
    config: &SubsetSearchConfig,
) -> Result<StabilizedResult> {
    config.validate()?;
    let scores = invariant_subsets(data, candidates, config)?;
    let preds = score_retained(data, &scores, config)?;
    let mut rows = make_rows(&scores, &preds);

    let retained: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].retained).collect();
    if retained.is_empty() {
        let fallback = marginal_mean_fallback(data);
        let ensemble = EnsembleModel::new(vec![(fallback, 1.0)])?;
        return Ok(StabilizedResult {
            ensemble,
            rows,
            cutoff: f64::NAN,
            fallback: true,
        });
    }

    // Best subset by prediction score (ties toward smaller subsets).
    let s_max_idx = *retained
        .iter()
        .min_by(|&&a, &&b| {
            let (pa, pb) = (preds[a].unwrap(), preds[b].unwrap());
            pb.partial_cmp(&pa)
                .unwrap()
                .then_with(|| scores[a].cols.len().cmp(&scores[b].cols.len()))
                .then_with(|| scores[a].cols.cmp(&scores[b].cols))
        })
        .unwrap();
    let s_max_cols = scores[s_max_idx].cols.clone();

    // Bootstrap scores of the best subset set the stage-2 cutoff.
    let boot_scores: Vec<f64> = (0..config.bootstrap)
        .into_par_iter()
        .map(|b| {
            let rows_b = bootstrap_rows(data, rng::derive(config.seed, &[0xb5, b as u64]));
            let sample = data.select_rows(&rows_b);
            let seed = rng::derive(config.seed, &[0xb5c0, b as u64]);
            prediction_score(&sample, &s_max_cols, &config.learner, seed)
        })
        .collect::<Result<_>>()?;
    let cutoff = stats::quantile(&boot_scores, config.alpha_pred);

    let mut member_idx: Vec<usize> = retained
        .iter()
        .copied()
        .filter(|&i| preds[i].unwrap() >= cutoff)
        .collect();
    if member_idx.is_empty() {
        member_idx.push(s_max_idx);
    }
    let weight = 1.0 / member_idx.len() as f64;
    let mut members = Vec::with_capacity(member_idx.len());
    for &i in &member_idx {
        let fit = predictors::fit(data, &scores[i].cols, &config.learner)?;
        members.push((fit, weight));
        rows[i].passed_pred = true;
        rows[i].weight = weight;
    }
    Ok(StabilizedResult {
        ensemble: EnsembleModel::new(members)?,
        rows,
        cutoff,
        fallback: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::Predict;
    use crate::scm::sample::sample_training;

    fn learning_data(n_per_env: usize, seed: u64) -> Dataset {
        let (scm, _) = crate::presets::fig2_linear_scm();
        let family = crate::presets::fig2_learning_family(&scm);
        sample_training(&scm, &family, n_per_env, seed).unwrap()
    }

    #[test]
    fn screening_none_keeps_all() {
        let data = learning_data(200, 1);
        let config = SubsetSearchConfig::new(Task::Regression, TestKind::Gcm, 0);
        let (cols, _) = screen(&data, &config).unwrap();
        assert_eq!(cols, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn screening_l1_keeps_strong_columns() {
        let data = learning_data(500, 2);
        let mut config = SubsetSearchConfig::new(Task::Regression, TestKind::Gcm, 0);
        config.screening = Screening::L1 { k: 3 };
        let (cols, _) = screen(&data, &config).unwrap();
        assert_eq!(cols.len(), 3);
        // X1 carries the strongest direct coefficient into Y.
        let x1 = data.col_index("X1").unwrap();
        assert!(cols.contains(&x1), "cols = {cols:?}");
    }

    #[test]
    fn screening_rejects_k_zero_and_pads_large_k() {
        let data = learning_data(100, 3);
        let mut config = SubsetSearchConfig::new(Task::Regression, TestKind::Gcm, 0);
        config.screening = Screening::L1 { k: 0 };
        assert!(screen(&data, &config).is_err());
        config.screening = Screening::L1 { k: 99 };
        let (cols, flags) = screen(&data, &config).unwrap();
        assert_eq!(cols.len(), 5);
        assert!(!flags.is_empty());
    }

    #[test]
    fn subset_enumeration_orders_and_caps() {
        let subsets = enumerate_subsets(&[0, 1, 2], None).unwrap();
        assert_eq!(subsets.len(), 8);
        assert_eq!(subsets[0], Vec::<usize>::new());
        let capped = enumerate_subsets(&[0, 1, 2], Some(1)).unwrap();
        assert_eq!(capped.len(), 4);
        let too_many: Vec<usize> = (0..20).collect();
        assert!(enumerate_subsets(&too_many, None).is_err());
    }

    #[test]
    fn single_retained_subset_wins() {
        let data = learning_data(400, 4);
        let config = SubsetSearchConfig::new(Task::Regression, TestKind::Gcm, 7);
        let candidates = vec![vec![0, 1]];
        let result = imp(&data, &candidates, &config).unwrap();
        assert!(!result.fallback);
        assert_eq!(result.selected, vec![0, 1]);
    }

    #[test]
    fn fallback_when_nothing_is_invariant() {
        let data = learning_data(400, 5);
        let mut config = SubsetSearchConfig::new(Task::Regression, TestKind::Gcm, 8);
        // Force rejection of everything.
        config.alpha_inv = 0.999_999;
        let candidates = vec![vec![3]];
        let result = imp(&data, &candidates, &config).unwrap();
        assert!(result.fallback);
        let mean = data.y.iter().sum::<f64>() / data.n() as f64;
        assert!((result.predictor.predict_row(&[0.0; 5]) - mean).abs() < 1e-12);

        let stab = stabilized(&data, &candidates, &config).unwrap();
        assert!(stab.fallback);
    }

    #[test]
    fn stabilized_weights_sum_to_one() {
        let (scm, _) = crate::presets::fig2_linear_scm();
        let family = crate::presets::fig2_scale_family();
        let data = sample_training(&scm, &family, 400, 6).unwrap();
        let mut config = SubsetSearchConfig::new(Task::Regression, TestKind::Gcm, 9);
        config.bootstrap = 25;
        config.alpha_inv = 0.01;
        let candidates = vec![vec![0, 1], vec![0, 1, 2], vec![3]];
        let result = stabilized(&data, &candidates, &config).unwrap();
        let total: f64 = result.rows.iter().map(|r| r.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // Cutoff never exceeds the best subset's own score.
        let best = result
            .rows
            .iter()
            .filter_map(|r| r.s_pred)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(result.cutoff <= best + 0.05, "cutoff {} best {best}", result.cutoff);
    }

    #[test]
    fn raising_alpha_inv_never_adds_subsets() {
        let data = learning_data(300, 10);
        let candidates = enumerate_subsets(&[0, 1, 2, 3, 4], Some(2)).unwrap();
        let mut config = SubsetSearchConfig::new(Task::Regression, TestKind::Gcm, 11);
        config.alpha_inv = 0.01;
        let low = invariant_subsets(&data, &candidates, &config).unwrap();
        config.alpha_inv = 0.2;
        let high = invariant_subsets(&data, &candidates, &config).unwrap();
        for (l, h) in low.iter().zip(&high) {
            if h.retained {
                assert!(l.retained, "subset {:?} gained by raising alpha", h.cols);
            }
        }
    }
}
