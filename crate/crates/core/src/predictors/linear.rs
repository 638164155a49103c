//! Closed-form and convex base learners: OLS, ridge, logistic, multinomial.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Fitted affine coefficients over a design matrix (no intercept column).
#[derive(Debug, Clone, serde::Serialize)]
pub struct AffineFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Whether a rank-deficiency fallback kicked in.
    pub regularized: bool,
}

impl AffineFit {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .weights
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>()
    }
}

/// Least squares with a ridge fallback on rank deficiency
/// (`lambda = 1e-8 * trace`).
pub fn fit_ols(x: &DMatrix<f64>, y: &[f64]) -> AffineFit {
    fit_ridge(x, y, 0.0)
}

/// Ridge regression; the penalty does not apply to the intercept.
pub fn fit_ridge(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> AffineFit {
    let n = x.nrows();
    let d = x.ncols();
    debug_assert_eq!(n, y.len());
    if d == 0 {
        let mean = y.iter().sum::<f64>() / n.max(1) as f64;
        return AffineFit {
            weights: Vec::new(),
            intercept: mean,
            regularized: false,
        };
    }
    // Center, solve for the slope, recover the intercept.
    let x_mean: Vec<f64> = (0..d).map(|j| x.column(j).sum() / n as f64).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - x_mean[j]);
    let yc = DVector::from_fn(n, |i, _| y[i] - y_mean);
    let mut gram = xc.transpose() * &xc;
    for j in 0..d {
        gram[(j, j)] += lambda;
    }
    let rhs = xc.transpose() * yc;
    let (w, regularized) = match gram.clone().cholesky() {
        Some(chol) => (chol.solve(&rhs), false),
        None => {
            let bump = 1e-8 * gram.trace().max(1e-12);
            for j in 0..d {
                gram[(j, j)] += bump;
            }
            let chol = gram.cholesky().expect("bumped Gram matrix factors");
            (chol.solve(&rhs), true)
        }
    };
    let intercept = y_mean
        - w.iter()
            .zip(&x_mean)
            .map(|(wi, mi)| wi * mi)
            .sum::<f64>();
    AffineFit {
        weights: w.iter().copied().collect(),
        intercept,
        regularized,
    }
}

/// Outcome flags from iterative fits.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct FitFlags {
    pub converged: bool,
    pub iterations: usize,
    pub separation_suspected: bool,
}

/// Binary logistic regression by iteratively reweighted least squares.
///
/// Stops at 100 iterations with a flag if the parameter update does not
/// settle; a tiny ridge keeps the reweighted system well-posed.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[f64]) -> Result<(AffineFit, FitFlags)> {
    let n = x.nrows();
    let d = x.ncols();
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::input("logistic regression needs responses in {0,1}"));
    }
    let mut beta = DVector::zeros(d + 1);
    let mut flags = FitFlags::default();
    let design = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    for iter in 0..100 {
        flags.iterations = iter + 1;
        let eta = &design * &beta;
        let mut grad = DVector::zeros(d + 1);
        let mut hess = DMatrix::zeros(d + 1, d + 1);
        for i in 0..n {
            let p = sigmoid(eta[i]);
            let w = (p * (1.0 - p)).max(1e-10);
            let r = y[i] - p;
            for a in 0..=d {
                grad[a] += design[(i, a)] * r;
                for b in a..=d {
                    hess[(a, b)] += w * design[(i, a)] * design[(i, b)];
                }
            }
        }
        for a in 0..=d {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
            hess[(a, a)] += 1e-10;
        }
        let step = hess
            .cholesky()
            .map(|c| c.solve(&grad))
            .unwrap_or_else(|| DVector::zeros(d + 1));
        beta += &step;
        if step.amax() < 1e-10 {
            flags.converged = true;
            break;
        }
    }
    if beta.amax() > 30.0 {
        flags.separation_suspected = true;
    }
    Ok((
        AffineFit {
            weights: beta.iter().skip(1).copied().collect(),
            intercept: beta[0],
            regularized: false,
        },
        flags,
    ))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Multinomial logistic regression (softmax) fitted by Newton steps on the
/// flattened parameters; class 0 is the reference with fixed zero scores.
#[derive(Debug, Clone)]
pub struct MultinomialFit {
    /// (k-1) x (d+1) coefficients, intercept first.
    pub coef: DMatrix<f64>,
    pub classes: usize,
}

impl MultinomialFit {
    /// Class probabilities for one covariate row.
    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let k = self.classes;
        let mut scores = vec![0.0f64; k];
        for c in 1..k {
            let row = self.coef.row(c - 1);
            let mut s = row[0];
            for (j, v) in x.iter().enumerate() {
                s += row[j + 1] * v;
            }
            scores[c] = s;
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for e in exps.iter_mut() {
            *e /= total;
        }
        exps
    }
}

/// Fits a softmax model of `labels` (values `0..k`) on `x`.
pub fn fit_multinomial(x: &DMatrix<f64>, labels: &[u32], k: usize) -> Result<MultinomialFit> {
    let n = x.nrows();
    let d = x.ncols();
    if k < 2 {
        return Err(Error::input("multinomial regression needs >= 2 classes"));
    }
    if labels.iter().any(|&l| l as usize >= k) {
        return Err(Error::input("label outside 0..k"));
    }
    let p = d + 1;
    let dim = (k - 1) * p;
    let mut theta = DVector::zeros(dim);
    let design = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    for _ in 0..60 {
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for i in 0..n {
            // Scores and probabilities for row i.
            let mut probs = vec![0.0f64; k];
            for c in 1..k {
                let mut s = 0.0;
                for j in 0..p {
                    s += theta[(c - 1) * p + j] * design[(i, j)];
                }
                probs[c] = s;
            }
            let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for pr in probs.iter_mut() {
                *pr = (*pr - max).exp();
                total += *pr;
            }
            for pr in probs.iter_mut() {
                *pr /= total;
            }
            let yi = labels[i] as usize;
            for c in 1..k {
                let r = if yi == c { 1.0 } else { 0.0 } - probs[c];
                for j in 0..p {
                    grad[(c - 1) * p + j] += r * design[(i, j)];
                }
            }
            for c1 in 1..k {
                for c2 in c1..k {
                    let w = if c1 == c2 {
                        probs[c1] * (1.0 - probs[c1])
                    } else {
                        -probs[c1] * probs[c2]
                    };
                    for j1 in 0..p {
                        for j2 in 0..p {
                            hess[((c1 - 1) * p + j1, (c2 - 1) * p + j2)] +=
                                w * design[(i, j1)] * design[(i, j2)];
                        }
                    }
                }
            }
        }
        // Mirror the upper block triangle.
        for c1 in 0..(k - 1) {
            for c2 in 0..c1 {
                for j1 in 0..p {
                    for j2 in 0..p {
                        hess[(c1 * p + j1, c2 * p + j2)] = hess[(c2 * p + j2, c1 * p + j1)];
                    }
                }
            }
        }
        for a in 0..dim {
            hess[(a, a)] += 1e-8;
        }
        let step = match hess.cholesky() {
            Some(c) => c.solve(&grad),
            None => break,
        };
        theta += &step;
        if step.amax() < 1e-10 {
            break;
        }
    }
    let coef = DMatrix::from_fn(k - 1, p, |c, j| theta[c * p + j]);
    Ok(MultinomialFit { coef, classes: k })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_coefficients() {
        let n = 200;
        let x = DMatrix::from_fn(n, 2, |i, j| ((i * (j + 3) % 17) as f64 - 8.0) / 5.0);
        let y: Vec<f64> = (0..n).map(|i| 2.0 * x[(i, 0)] - 1.5 * x[(i, 1)] + 0.7).collect();
        let fit = fit_ols(&x, &y);
        assert!((fit.weights[0] - 2.0).abs() < 1e-10);
        assert!((fit.weights[1] + 1.5).abs() < 1e-10);
        assert!((fit.intercept - 0.7).abs() < 1e-10);
    }

    #[test]
    fn collinear_design_falls_back_to_ridge() {
        let n = 50;
        let x = DMatrix::from_fn(n, 2, |i, j| {
            let base = (i as f64).sin();
            if j == 0 {
                base
            } else {
                2.0 * base
            }
        });
        let y: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        let fit = fit_ols(&x, &y);
        assert!(fit.regularized);
        assert!(fit.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn logistic_learns_a_threshold() {
        let n = 400;
        let x = DMatrix::from_fn(n, 1, |i, _| (i as f64 / n as f64 - 0.5) * 6.0);
        let y: Vec<f64> = (0..n)
            .map(|i| {
                // Deterministic labels with overlap to avoid separation.
                let p = sigmoid(2.0 * x[(i, 0)]);
                if (i * 2654435761 % 1000) as f64 / 1000.0 < p {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let (fit, flags) = fit_logistic(&x, &y).unwrap();
        assert!(flags.converged);
        assert!(fit.weights[0] > 1.0 && fit.weights[0] < 3.5, "w = {}", fit.weights[0]);
    }

    #[test]
    fn multinomial_matches_marginals_without_features() {
        let x = DMatrix::zeros(300, 0);
        let labels: Vec<u32> = (0..300).map(|i| (i % 3) as u32).collect();
        let fit = fit_multinomial(&x, &labels, 3).unwrap();
        let probs = fit.probabilities(&[]);
        for p in probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-6);
        }
    }
}
