//! Bagged shallow regression trees.
//!
//! A desk-scale stand-in for random forests: each tree fits a bootstrap
//! resample with a random feature subset per split and greedy
//! variance-reduction splits over quantile candidates.

use nalgebra::DMatrix;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use crate::rng;

const SPLIT_CANDIDATES: usize = 16;
const MIN_LEAF: usize = 5;

#[derive(Debug, Clone, serde::Serialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Node::Leaf { value } => *value,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct StumpForest {
    pub trees: Vec<Node>,
}

impl StumpForest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

fn build_tree(
    x: &DMatrix<f64>,
    y: &[f64],
    rows: &[usize],
    depth: usize,
    rng: &mut ChaCha8Rng,
) -> Node {
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len().max(1) as f64;
    if depth == 0 || rows.len() < 2 * MIN_LEAF {
        return Node::Leaf { value: mean };
    }
    let d = x.ncols();
    let n_try = ((d as f64).sqrt().ceil() as usize).clamp(1, d);
    let mut features: Vec<usize> = (0..d).collect();
    // Partial Fisher-Yates for the feature subset.
    for i in 0..n_try {
        let j = i + rng.random_range(0..(d - i));
        features.swap(i, j);
    }

    let base_sse: f64 = rows.iter().map(|&r| (y[r] - mean) * (y[r] - mean)).sum();
    let mut best: Option<(f64, usize, f64)> = None;
    for &f in &features[..n_try] {
        let mut vals: Vec<f64> = rows.iter().map(|&r| x[(r, f)]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        if vals.len() < 2 {
            continue;
        }
        for c in 1..=SPLIT_CANDIDATES.min(vals.len() - 1) {
            let idx = c * (vals.len() - 1) / (SPLIT_CANDIDATES.min(vals.len() - 1) + 1);
            let threshold = vals[idx];
            let (mut ln, mut ls, mut rn, mut rs) = (0usize, 0.0f64, 0usize, 0.0f64);
            for &r in rows {
                if x[(r, f)] <= threshold {
                    ln += 1;
                    ls += y[r];
                } else {
                    rn += 1;
                    rs += y[r];
                }
            }
            if ln < MIN_LEAF || rn < MIN_LEAF {
                continue;
            }
            let (lm, rm) = (ls / ln as f64, rs / rn as f64);
            let mut sse = 0.0;
            for &r in rows {
                let m = if x[(r, f)] <= threshold { lm } else { rm };
                sse += (y[r] - m) * (y[r] - m);
            }
            let gain = base_sse - sse;
            if best.map_or(true, |(g, _, _)| gain > g) && gain > 1e-12 {
                best = Some((gain, f, threshold));
            }
        }
    }
    match best {
        None => Node::Leaf { value: mean },
        Some((_, feature, threshold)) => {
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&r| x[(r, feature)] <= threshold);
            Node::Split {
                feature,
                threshold,
                left: Box::new(build_tree(x, y, &left_rows, depth - 1, rng)),
                right: Box::new(build_tree(x, y, &right_rows, depth - 1, rng)),
            }
        }
    }
}

pub fn fit_forest(
    x: &DMatrix<f64>,
    y: &[f64],
    trees: usize,
    depth: usize,
    seed: u64,
) -> StumpForest {
    let n = x.nrows();
    let forest = (0..trees)
        .map(|t| {
            let mut rng = rng::stream(seed, &[0x57, t as u64]);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            build_tree(x, y, &rows, depth, &mut rng)
        })
        .collect();
    StumpForest { trees: forest }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_a_step_function() {
        let n = 600;
        let mut rng = crate::rng::stream(3, &[0]);
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let y: Vec<f64> = (0..n)
            .map(|i| if x[(i, 0)] > 0.2 { 1.0 } else { 0.0 })
            .collect();
        let forest = fit_forest(&x, &y, 30, 3, 11);
        let high = forest.predict(&[0.8, 0.0]);
        let low = forest.predict(&[-0.8, 0.0]);
        assert!(high > 0.85, "high = {high}");
        assert!(low < 0.15, "low = {low}");
    }

    #[test]
    fn deterministic_given_seed() {
        let x = DMatrix::from_fn(100, 2, |i, j| ((i + j * 31) % 13) as f64);
        let y: Vec<f64> = (0..100).map(|i| (i % 5) as f64).collect();
        let a = fit_forest(&x, &y, 5, 2, 7);
        let b = fit_forest(&x, &y, 5, 2, 7);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
