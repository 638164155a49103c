//! A small softplus multilayer perceptron trained with Adam.
//!
//! Used as the nonlinear base learner. Inputs are standardized with training
//! moments; classification heads train on the log loss through a sigmoid.
//! Gradients are validated against finite differences in the test suite.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use crate::rng;
use crate::scm::Task;

#[derive(Debug, Clone)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    /// Decoupled weight decay applied each step.
    pub weight_decay: f64,
    pub batch: usize,
    pub max_steps: usize,
    /// Fraction of rows held out for early stopping.
    pub val_fraction: f64,
    /// Evaluations (every `eval_every` steps) without improvement tolerated.
    pub patience: usize,
    pub eval_every: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![64, 64, 64],
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            batch: 128,
            max_steps: 2500,
            val_fraction: 0.15,
            patience: 8,
            eval_every: 100,
        }
    }
}

/// A fitted network; layer sizes, flattened parameters, and input scaling.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MlpModel {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub classification: bool,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Smooth hinge: `ln(1 + e^x)`, evaluated stably; linear for large inputs.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        0.0
    } else {
        x.exp().ln_1p()
    }
}

impl MlpModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let z: Vec<f64> = x
            .iter()
            .zip(self.input_mean.iter().zip(&self.input_scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        let out = forward_single(&self.sizes, &self.params, &z);
        if self.classification {
            super::linear::sigmoid(out)
        } else {
            out
        }
    }
}

fn forward_single(sizes: &[usize], params: &[f64], x: &[f64]) -> f64 {
    let mut cur = x.to_vec();
    let mut offset = 0;
    for l in 0..sizes.len() - 1 {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let mut next = vec![0.0; n_out];
        for (o, unit) in next.iter_mut().enumerate() {
            let mut acc = params[offset + n_in * n_out + o];
            for (i, &v) in cur.iter().enumerate() {
                acc += params[offset + i * n_out + o] * v;
            }
            *unit = if l + 2 == sizes.len() { acc } else { softplus(acc) };
        }
        offset += n_in * n_out + n_out;
        cur = next;
    }
    cur[0]
}

/// Mean loss and gradient over a batch; squared loss for regression,
/// log loss through a sigmoid for classification.
pub fn loss_and_grad(
    sizes: &[usize],
    params: &[f64],
    x: &DMatrix<f64>,
    y: &[f64],
    rows: &[usize],
    classification: bool,
) -> (f64, Vec<f64>) {
    let n_layers = sizes.len() - 1;
    let m = rows.len();
    let mut grad = vec![0.0; params.len()];
    let mut total_loss = 0.0;

    // Layer activations per row (batch loop kept simple; widths are small).
    for &r in rows {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push((0..x.ncols()).map(|j| x[(r, j)]).collect());
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let prev = &acts[l];
            let mut next = vec![0.0; n_out];
            for (o, unit) in next.iter_mut().enumerate() {
                let mut acc = params[offset + n_in * n_out + o];
                for (i, &v) in prev.iter().enumerate() {
                    acc += params[offset + i * n_out + o] * v;
                }
                *unit = if l + 1 == n_layers { acc } else { softplus(acc) };
            }
            offset += n_in * n_out + n_out;
            acts.push(next);
        }
        let out = acts[n_layers][0];
        // dL/dout for the mean loss over the batch.
        let dout = if classification {
            let p = super::linear::sigmoid(out);
            let yi = y[r];
            total_loss += -(yi * p.max(1e-12).ln() + (1.0 - yi) * (1.0 - p).max(1e-12).ln());
            p - yi
        } else {
            let e = out - y[r];
            total_loss += e * e;
            2.0 * e
        };

        // Backward pass.
        let mut delta = vec![dout];
        let mut offsets: Vec<usize> = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += sizes[l] * sizes[l + 1] + sizes[l + 1];
        }
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let base = offsets[l];
            let prev = &acts[l];
            for o in 0..n_out {
                let d = delta[o];
                grad[base + n_in * n_out + o] += d;
                for i in 0..n_in {
                    grad[base + i * n_out + o] += d * prev[i];
                }
            }
            if l > 0 {
                let mut prev_delta = vec![0.0; n_in];
                for (i, pd) in prev_delta.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (o, d) in delta.iter().enumerate() {
                        acc += params[base + i * n_out + o] * d;
                    }
                    // softplus'(z) = sigmoid(z) = 1 - exp(-softplus(z)).
                    *pd = acc * (1.0 - (-prev[i]).exp());
                }
                delta = prev_delta;
            }
        }
    }
    let scale = 1.0 / m as f64;
    for g in grad.iter_mut() {
        *g *= scale;
    }
    (total_loss * scale, grad)
}

fn mean_loss(
    sizes: &[usize],
    params: &[f64],
    x: &DMatrix<f64>,
    y: &[f64],
    rows: &[usize],
    classification: bool,
) -> f64 {
    let mut total = 0.0;
    for &r in rows {
        let row: Vec<f64> = (0..x.ncols()).map(|j| x[(r, j)]).collect();
        let out = forward_single(sizes, params, &row);
        if classification {
            let p = super::linear::sigmoid(out);
            total += -(y[r] * p.max(1e-12).ln() + (1.0 - y[r]) * (1.0 - p).max(1e-12).ln());
        } else {
            let e = out - y[r];
            total += e * e;
        }
    }
    total / rows.len() as f64
}

fn init_params(sizes: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut params = vec![0.0; param_count(sizes)];
    let mut offset = 0;
    for w in sizes.windows(2) {
        let (n_in, n_out) = (w[0], w[1]);
        let scale = (1.0 / n_in.max(1) as f64).sqrt();
        for p in params[offset..offset + n_in * n_out].iter_mut() {
            *p = (2.0 * rng.random::<f64>() - 1.0) * scale;
        }
        offset += n_in * n_out + n_out;
    }
    params
}

/// Trains the network; deterministic given the seed.
pub fn fit_mlp(
    x: &DMatrix<f64>,
    y: &[f64],
    task: Task,
    config: &MlpConfig,
    seed: u64,
) -> MlpModel {
    let n = x.nrows();
    let d = x.ncols();
    let classification = task == Task::Classification;

    let input_mean: Vec<f64> = (0..d).map(|j| x.column(j).sum() / n as f64).collect();
    let input_scale: Vec<f64> = (0..d)
        .map(|j| {
            let m = input_mean[j];
            let var = x.column(j).iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            var.sqrt().max(1e-8)
        })
        .collect();
    let xs = DMatrix::from_fn(n, d, |i, j| (x[(i, j)] - input_mean[j]) / input_scale[j]);

    let mut sizes = vec![d];
    sizes.extend(config.hidden.iter().copied());
    sizes.push(1);

    let mut rng = rng::stream(seed, &[0x317]);
    let mut params = init_params(&sizes, &mut rng);

    // Seeded train/validation split.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((n as f64 * config.val_fraction) as usize).clamp(1, n.saturating_sub(1).max(1));
    let (val_rows, train_rows) = order.split_at(n_val.min(n.saturating_sub(1)));
    let train_rows = if train_rows.is_empty() { &order[..] } else { train_rows };

    let mut m1 = vec![0.0; params.len()];
    let mut m2 = vec![0.0; params.len()];
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut stale = 0usize;

    for step in 0..config.max_steps {
        let batch: Vec<usize> = (0..config.batch.min(train_rows.len()))
            .map(|_| train_rows[rng.random_range(0..train_rows.len())])
            .collect();
        let (_, grad) = loss_and_grad(&sizes, &params, &xs, y, &batch, classification);
        let t = (step + 1) as f64;
        let bc1 = 1.0 - b1.powf(t);
        let bc2 = 1.0 - b2.powf(t);
        for i in 0..params.len() {
            m1[i] = b1 * m1[i] + (1.0 - b1) * grad[i];
            m2[i] = b2 * m2[i] + (1.0 - b2) * grad[i] * grad[i];
            params[i] -= config.learning_rate * (m1[i] / bc1) / ((m2[i] / bc2).sqrt() + eps)
                + config.learning_rate * config.weight_decay * params[i];
        }
        if (step + 1) % config.eval_every == 0 && !val_rows.is_empty() {
            let val = mean_loss(&sizes, &params, &xs, y, val_rows, classification);
            if val + 1e-9 < best_val {
                best_val = val;
                best_params.copy_from_slice(&params);
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }
    if best_val.is_finite() {
        params = best_params;
    }
    MlpModel {
        sizes,
        params,
        input_mean,
        input_scale,
        classification,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_batch(classification: bool) -> (DMatrix<f64>, Vec<f64>) {
        let n = 40;
        let x = DMatrix::from_fn(n, 3, |i, j| ((i * 7 + j * 13) % 11) as f64 / 5.0 - 1.0);
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let v = (x[(i, 0)] * 1.3 - x[(i, 1)]).sin() + 0.5 * x[(i, 2)];
                if classification {
                    if v > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    v
                }
            })
            .collect();
        (x, y)
    }

    #[test]
    fn gradients_match_finite_differences() {
        for classification in [false, true] {
            let (x, y) = toy_batch(classification);
            let sizes = vec![3, 5, 4, 1];
            let mut rng = crate::rng::stream(42, &[9]);
            let params = init_params(&sizes, &mut rng);
            let rows: Vec<usize> = (0..x.nrows()).collect();
            let (_, grad) = loss_and_grad(&sizes, &params, &x, &y, &rows, classification);
            let h = 1e-6;
            let mut checked = 0;
            for i in (0..params.len()).step_by(3) {
                let mut plus = params.clone();
                plus[i] += h;
                let mut minus = params.clone();
                minus[i] -= h;
                let fd = (mean_loss(&sizes, &plus, &x, &y, &rows, classification)
                    - mean_loss(&sizes, &minus, &x, &y, &rows, classification))
                    / (2.0 * h);
                let denom = fd.abs().max(grad[i].abs()).max(1e-6);
                assert!(
                    ((grad[i] - fd) / denom).abs() < 1e-4,
                    "param {i}: analytic {} vs fd {fd}",
                    grad[i]
                );
                checked += 1;
            }
            assert!(checked > 10);
        }
    }

    #[test]
    fn fits_a_smooth_function() {
        let n = 2000;
        let mut rng = crate::rng::stream(7, &[1]);
        let x = DMatrix::from_fn(n, 1, |_, _| 4.0 * rng.random::<f64>() - 2.0);
        let y: Vec<f64> = (0..n).map(|i| (2.0 * x[(i, 0)]).tanh()).collect();
        let config = MlpConfig {
            hidden: vec![32, 32],
            max_steps: 4000,
            ..Default::default()
        };
        let model = fit_mlp(&x, &y, Task::Regression, &config, 3);
        let mut mse = 0.0;
        for i in 0..200 {
            let xv = -2.0 + 4.0 * (i as f64) / 199.0;
            let err = model.predict(&[xv]) - (2.0 * xv).tanh();
            mse += err * err;
        }
        mse /= 200.0;
        assert!(mse < 0.02, "mse = {mse}");
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = toy_batch(false);
        let config = MlpConfig {
            hidden: vec![8],
            max_steps: 200,
            ..Default::default()
        };
        let a = fit_mlp(&x, &y, Task::Regression, &config, 5);
        let b = fit_mlp(&x, &y, Task::Regression, &config, 5);
        assert_eq!(a.params, b.params);
    }
}
