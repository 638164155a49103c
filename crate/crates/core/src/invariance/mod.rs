//! Tests of subset invariance: `H0: Y ⊥ E | X_S`.
//!
//! Four tests share the cross-fitting machinery below: a residual ANOVA
//! (IRD), the generalized covariance measure (GCM), a target-prediction AUC
//! comparison (ITP), and an environment-prediction loss comparison (IEP).
//! Each returns a p-value used as the invariance score of `S`.

pub mod delong;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::predictors::{self, LearnerConfig, Predict};
use crate::rng;
use crate::scm::{Dataset, Task};
use crate::stats;

pub use delong::{auc, delong_paired};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Ird,
    Gcm,
    Itp,
    Iep,
}

impl std::fmt::Display for TestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TestKind::Ird => "ird",
            TestKind::Gcm => "gcm",
            TestKind::Itp => "itp",
            TestKind::Iep => "iep",
        };
        f.write_str(s)
    }
}

/// Result of one invariance test on one subset.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InvarianceReport {
    pub subset: Vec<String>,
    pub test: TestKind,
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
    pub flags: Vec<String>,
}

pub const FOLDS: usize = 5;

/// Fold assignment per row, stratified by environment (and by class for
/// classification) so every fold sees every stratum.
pub fn fold_assignment(data: &Dataset, folds: usize, seed: u64, by_class: bool) -> Vec<usize> {
    let mut strata: std::collections::BTreeMap<(u32, i8), Vec<usize>> = Default::default();
    for i in 0..data.n() {
        let class = if by_class && data.task == Task::Classification {
            data.y[i] as i8
        } else {
            -1
        };
        strata.entry((data.env[i], class)).or_default().push(i);
    }
    let mut assignment = vec![0usize; data.n()];
    let mut rng = rng::stream(seed, &[0xf01d]);
    let mut offset = 0usize;
    for rows in strata.values() {
        let mut rows = rows.clone();
        rows.shuffle(&mut rng);
        for (pos, &row) in rows.iter().enumerate() {
            assignment[row] = (pos + offset) % folds;
        }
        offset += rows.len();
    }
    assignment
}

/// Out-of-fold predictions of `Y` from the given design columns.
///
/// `extra` columns (already aligned with the rows) are appended to the
/// covariate subset. Returns predictions plus fit flags.
pub fn crossfit_predictions(
    data: &Dataset,
    cols: &[usize],
    extra: Option<&DMatrix<f64>>,
    learner: &LearnerConfig,
    seed: u64,
) -> Result<(Vec<f64>, Vec<String>)> {
    let augmented = augment_dataset(data, cols, extra)?;
    let all_cols: Vec<usize> = (0..augmented.d()).collect();
    let folds = fold_assignment(&augmented, FOLDS, seed, true);
    let mut predictions = vec![f64::NAN; augmented.n()];
    let mut flags = Vec::new();
    for f in 0..FOLDS {
        let train_rows: Vec<usize> = (0..augmented.n()).filter(|&i| folds[i] != f).collect();
        let test_rows: Vec<usize> = (0..augmented.n()).filter(|&i| folds[i] == f).collect();
        if test_rows.is_empty() {
            continue;
        }
        if train_rows.is_empty() {
            return Err(Error::input("not enough rows for cross-fitting"));
        }
        let train = augmented.select_rows(&train_rows);
        let model = predictors::fit(&train, &all_cols, learner)?;
        for flag in &model.flags {
            if !flags.contains(flag) {
                flags.push(flag.clone());
            }
        }
        let mut row = vec![0.0; augmented.d()];
        for &i in &test_rows {
            for j in 0..augmented.d() {
                row[j] = augmented.x[(i, j)];
            }
            predictions[i] = model.predict_row(&row);
        }
    }
    Ok((predictions, flags))
}

fn augment_dataset(data: &Dataset, cols: &[usize], extra: Option<&DMatrix<f64>>) -> Result<Dataset> {
    let n = data.n();
    let extra_cols = extra.map_or(0, |m| m.ncols());
    if let Some(m) = extra {
        if m.nrows() != n {
            return Err(Error::input("extra feature rows must match the dataset"));
        }
    }
    let d = cols.len() + extra_cols;
    let x = DMatrix::from_fn(n, d, |i, j| {
        if j < cols.len() {
            data.x[(i, cols[j])]
        } else {
            extra.unwrap()[(i, j - cols.len())]
        }
    });
    let mut columns: Vec<String> = cols.iter().map(|&c| data.columns[c].clone()).collect();
    for j in 0..extra_cols {
        columns.push(format!("__f{j}"));
    }
    Dataset::new(
        columns,
        x,
        data.y.clone(),
        data.env_labels.clone(),
        data.env.clone(),
        data.task,
    )
}

/// Out-of-fold class probabilities of the environment label from the subset
/// columns plus optional extra features; softmax model per fold.
pub fn crossfit_env_probabilities(
    data: &Dataset,
    cols: &[usize],
    extra: Option<&DMatrix<f64>>,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let n = data.n();
    let k = data.n_envs();
    let extra_cols = extra.map_or(0, |m| m.ncols());
    let d = cols.len() + extra_cols;
    let design = DMatrix::from_fn(n, d, |i, j| {
        if j < cols.len() {
            data.x[(i, cols[j])]
        } else {
            extra.unwrap()[(i, j - cols.len())]
        }
    });
    let folds = fold_assignment(data, FOLDS, seed, true);
    let mut probs = DMatrix::zeros(n, k);
    for f in 0..FOLDS {
        let train_rows: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
        let test_rows: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
        if test_rows.is_empty() {
            continue;
        }
        let x_train = DMatrix::from_fn(train_rows.len(), d, |r, j| design[(train_rows[r], j)]);
        let labels: Vec<u32> = train_rows.iter().map(|&i| data.env[i]).collect();
        let fit = predictors::fit_multinomial(&x_train, &labels, k)?;
        let mut row = vec![0.0; d];
        for &i in &test_rows {
            for j in 0..d {
                row[j] = design[(i, j)];
            }
            let p = fit.probabilities(&row);
            for c in 0..k {
                probs[(i, c)] = p[c];
            }
        }
    }
    Ok(probs)
}

fn check_environments(data: &Dataset, min_rows: usize) -> Result<usize> {
    let counts = data.env_counts();
    let k = counts.iter().filter(|&&c| c > 0).count();
    if k < 2 {
        return Err(Error::input("invariance tests need at least 2 environments"));
    }
    if counts.iter().any(|&c| c > 0 && c < min_rows) {
        return Err(Error::input(format!(
            "every environment needs at least {min_rows} rows"
        )));
    }
    Ok(k)
}

/// Residual-distribution test: one-way ANOVA F on the cross-fit residual
/// means across environments.
pub fn test_ird(
    data: &Dataset,
    cols: &[usize],
    learner: &LearnerConfig,
    seed: u64,
) -> Result<InvarianceReport> {
    let k = check_environments(data, 3)?;
    let (pred, flags) = crossfit_predictions(data, cols, None, learner, seed)?;
    let residuals: Vec<f64> = (0..data.n()).map(|i| data.y[i] - pred[i]).collect();

    let counts = data.env_counts();
    let n = data.n() as f64;
    let grand = residuals.iter().sum::<f64>() / n;
    let mut group_means = vec![0.0f64; counts.len()];
    for i in 0..data.n() {
        group_means[data.env[i] as usize] += residuals[i];
    }
    for (m, &c) in group_means.iter_mut().zip(&counts) {
        if c > 0 {
            *m /= c as f64;
        }
    }
    let mut ss_between = 0.0;
    for (e, &c) in counts.iter().enumerate() {
        if c > 0 {
            ss_between += c as f64 * (group_means[e] - grand) * (group_means[e] - grand);
        }
    }
    let mut ss_within = 0.0;
    for i in 0..data.n() {
        let d = residuals[i] - group_means[data.env[i] as usize];
        ss_within += d * d;
    }
    let df1 = (k - 1) as f64;
    let df2 = n - k as f64;
    // Degeneracy threshold relative to the response scale: float-level
    // residuals from an exact fit count as zero variance.
    let y_scale = data.y.iter().map(|v| v * v).sum::<f64>() / n;
    let tiny = 1e-24 * (y_scale + 1.0);
    let (statistic, p_value) = if ss_within / df2 <= tiny {
        if ss_between / df1 > tiny {
            (f64::INFINITY, 0.0)
        } else {
            (0.0, 1.0)
        }
    } else {
        let f = (ss_between / df1) / (ss_within / df2);
        (f, stats::f_sf(df1, df2, f))
    };
    Ok(InvarianceReport {
        subset: cols.iter().map(|&c| data.columns[c].clone()).collect(),
        test: TestKind::Ird,
        statistic,
        dof: df1,
        p_value,
        flags,
    })
}

/// Generalized covariance measure: the products of the `Y`-residuals and the
/// environment one-hot residuals have mean zero under invariance.
pub fn test_gcm(
    data: &Dataset,
    cols: &[usize],
    learner: &LearnerConfig,
    seed: u64,
) -> Result<InvarianceReport> {
    let k = check_environments(data, 2)?;
    let (pred, mut flags) = crossfit_predictions(data, cols, None, learner, seed)?;
    let env_probs = crossfit_env_probabilities(data, cols, None, seed)?;

    // Residual products; the reference environment column is dropped.
    let n = data.n();
    let dim = k - 1;
    let mut products = DMatrix::zeros(n, dim);
    for i in 0..n {
        let ry = data.y[i] - pred[i];
        for c in 1..k {
            let ind = if data.env[i] as usize == c { 1.0 } else { 0.0 };
            products[(i, c - 1)] = ry * (ind - env_probs[(i, c)]);
        }
    }
    let mean = DVector::from_fn(dim, |c, _| products.column(c).sum() / n as f64);
    let mut sigma = DMatrix::zeros(dim, dim);
    for i in 0..n {
        for a in 0..dim {
            for b in 0..dim {
                sigma[(a, b)] += (products[(i, a)] - mean[a]) * (products[(i, b)] - mean[b]);
            }
        }
    }
    sigma /= n as f64;

    // Invert with a rank fallback.
    let (statistic, dof) = match sigma.clone().cholesky() {
        Some(chol) => {
            let solved = chol.solve(&mean);
            ((n as f64) * mean.dot(&solved), dim as f64)
        }
        None => {
            flags.push("singular-covariance".to_string());
            let svd = sigma.svd(true, true);
            let tol = 1e-12 * svd.singular_values.max().max(1e-300);
            let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
            let pinv = svd.pseudo_inverse(tol).map_err(|e| Error::Numeric {
                node: "gcm".into(),
                message: e.to_string(),
            })?;
            (((n as f64) * mean.transpose() * pinv * &mean)[(0, 0)], rank as f64)
        }
    };
    let p_value = if dof == 0.0 {
        1.0
    } else {
        stats::chi2_sf(dof, statistic.max(0.0))
    };
    Ok(InvarianceReport {
        subset: cols.iter().map(|&c| data.columns[c].clone()).collect(),
        test: TestKind::Gcm,
        statistic,
        dof,
        p_value,
        flags,
    })
}

fn env_onehot(data: &Dataset, order: &[usize]) -> DMatrix<f64> {
    // One-hot with the reference class (env 0) dropped; rows may be permuted.
    let k = data.n_envs();
    DMatrix::from_fn(data.n(), k - 1, |i, c| {
        if data.env[order[i]] as usize == c + 1 {
            1.0
        } else {
            0.0
        }
    })
}

/// Target-prediction test: does the environment improve ROC AUC for `Y`
/// beyond `X_S`? Compares against a permuted environment via DeLong.
pub fn test_itp(
    data: &Dataset,
    cols: &[usize],
    learner: &LearnerConfig,
    seed: u64,
) -> Result<InvarianceReport> {
    if data.task != Task::Classification {
        return Err(Error::input("the target-prediction test needs classification data"));
    }
    check_environments(data, 2)?;
    if data.y.iter().all(|&v| v == 0.0) || data.y.iter().all(|&v| v == 1.0) {
        return Err(Error::input("both response classes must be present"));
    }
    let n = data.n();
    let identity: Vec<usize> = (0..n).collect();
    let mut permuted = identity.clone();
    permuted.shuffle(&mut rng::stream(seed, &[0x175]));

    let e_true = env_onehot(data, &identity);
    let e_perm = env_onehot(data, &permuted);
    let (scores_true, mut flags) = crossfit_predictions(data, cols, Some(&e_true), learner, seed)?;
    let (scores_perm, flags2) = crossfit_predictions(data, cols, Some(&e_perm), learner, seed)?;
    for f in flags2 {
        if !flags.contains(&f) {
            flags.push(f);
        }
    }
    let cmp = delong_paired(&scores_true, &scores_perm, &data.y)?;
    if cmp.variance == 0.0 {
        flags.push("degenerate-auc-variance".to_string());
    }
    Ok(InvarianceReport {
        subset: cols.iter().map(|&c| data.columns[c].clone()).collect(),
        test: TestKind::Itp,
        statistic: cmp.z,
        dof: f64::NAN,
        p_value: cmp.p_value,
        flags,
    })
}

/// Environment-prediction test: does `Y` improve the cross-entropy of a
/// model for `E` beyond `X_S`? Paired t-test against a permuted `Y`.
pub fn test_iep(
    data: &Dataset,
    cols: &[usize],
    _learner: &LearnerConfig,
    seed: u64,
) -> Result<InvarianceReport> {
    check_environments(data, 2)?;
    let n = data.n();
    let mut permuted: Vec<usize> = (0..n).collect();
    permuted.shuffle(&mut rng::stream(seed, &[0x1e9]));

    let y_true = DMatrix::from_fn(n, 1, |i, _| data.y[i]);
    let y_perm = DMatrix::from_fn(n, 1, |i, _| data.y[permuted[i]]);
    let p_true = crossfit_env_probabilities(data, cols, Some(&y_true), seed)?;
    let p_perm = crossfit_env_probabilities(data, cols, Some(&y_perm), seed)?;

    // diff = loss(true) - loss(perm); invariance rejected when Y helps,
    // i.e. the mean difference is clearly negative.
    let mut diffs = Vec::with_capacity(n);
    for i in 0..n {
        let e = data.env[i] as usize;
        let lt = -p_true[(i, e)].max(1e-12).ln();
        let lp = -p_perm[(i, e)].max(1e-12).ln();
        diffs.push(lt - lp);
    }
    let (mean, sd) = stats::mean_sd(&diffs);
    let dof = (n - 1) as f64;
    let (statistic, p_value) = if sd <= 1e-300 {
        if mean >= 0.0 {
            (0.0, 1.0)
        } else {
            (f64::NEG_INFINITY, 0.0)
        }
    } else {
        let t = mean / (sd / (n as f64).sqrt());
        (t, stats::t_sf(dof, -t))
    };
    Ok(InvarianceReport {
        subset: cols.iter().map(|&c| data.columns[c].clone()).collect(),
        test: TestKind::Iep,
        statistic,
        dof,
        p_value,
        flags: Vec::new(),
    })
}

/// Dispatches on the test kind.
pub fn run_test(
    kind: TestKind,
    data: &Dataset,
    cols: &[usize],
    learner: &LearnerConfig,
    seed: u64,
) -> Result<InvarianceReport> {
    match kind {
        TestKind::Ird => test_ird(data, cols, learner, seed),
        TestKind::Gcm => test_gcm(data, cols, learner, seed),
        TestKind::Itp => test_itp(data, cols, learner, seed),
        TestKind::Iep => test_iep(data, cols, learner, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset_with_residual_shift(shift: f64, n_per_env: usize) -> Dataset {
        let mut rng = rng::stream(21, &[3]);
        use rand_distr::{Distribution, StandardNormal};
        let n = 2 * n_per_env;
        let x = DMatrix::from_fn(n, 1, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let mut y = Vec::with_capacity(n);
        let mut env = Vec::with_capacity(n);
        for i in 0..n {
            let e = (i / n_per_env) as u32;
            let z: f64 = StandardNormal.sample(&mut rng);
            y.push(x[(i, 0)] + shift * e as f64 + z);
            env.push(e);
        }
        Dataset::new(
            vec!["X1".into()],
            x,
            y,
            vec!["a".into(), "b".into()],
            env,
            Task::Regression,
        )
        .unwrap()
    }

    #[test]
    fn ird_detects_a_mean_shift() {
        let data = dataset_with_residual_shift(1.0, 500);
        let learner = LearnerConfig::default_for(Task::Regression);
        let report = test_ird(&data, &[0], &learner, 1).unwrap();
        assert!(report.p_value < 1e-6, "p = {}", report.p_value);
    }

    #[test]
    fn ird_accepts_identical_environments() {
        let data = dataset_with_residual_shift(0.0, 400);
        let learner = LearnerConfig::default_for(Task::Regression);
        let report = test_ird(&data, &[0], &learner, 1).unwrap();
        assert!(report.p_value > 0.01, "p = {}", report.p_value);
    }

    #[test]
    fn ird_degenerate_residuals() {
        // Y exactly a function of X gives zero residual variance.
        let x = DMatrix::from_fn(40, 1, |i, _| i as f64);
        let y: Vec<f64> = (0..40).map(|i| 2.0 * i as f64).collect();
        let data = Dataset::new(
            vec!["X1".into()],
            x,
            y,
            vec!["a".into(), "b".into()],
            (0..40).map(|i| (i % 2) as u32).collect(),
            Task::Regression,
        )
        .unwrap();
        let learner = LearnerConfig {
            kind: crate::predictors::LearnerKind::Ols,
            seed: 0,
        };
        let report = test_ird(&data, &[0], &learner, 1).unwrap();
        assert_eq!(report.p_value, 1.0);
    }

    #[test]
    fn gcm_zero_products_give_p_one() {
        let data = dataset_with_residual_shift(2.0, 300);
        let learner = LearnerConfig::default_for(Task::Regression);
        let report = test_gcm(&data, &[0], &learner, 1).unwrap();
        assert!(report.p_value < 1e-4, "p = {}", report.p_value);

        let calm = dataset_with_residual_shift(0.0, 300);
        let report = test_gcm(&calm, &[0], &learner, 1).unwrap();
        assert!(report.p_value > 0.01, "p = {}", report.p_value);
    }

    #[test]
    fn iep_power_case() {
        // Y's mean differs strongly across environments and S is empty, so Y
        // predicts E.
        let data = dataset_with_residual_shift(2.0, 1000);
        let learner = LearnerConfig::default_for(Task::Regression);
        let report = test_iep(&data, &[], &learner, 5).unwrap();
        assert!(report.p_value < 0.01, "p = {}", report.p_value);
    }

    #[test]
    fn itp_requires_classification() {
        let data = dataset_with_residual_shift(0.0, 50);
        let learner = LearnerConfig::default_for(Task::Regression);
        assert!(test_itp(&data, &[0], &learner, 1).is_err());
    }
}
