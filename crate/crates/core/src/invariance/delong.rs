//! ROC AUC with DeLong variance for paired classifier comparison.

use crate::error::{Error, Result};
use crate::stats;

/// Midranks (average ranks for ties), 1-based.
fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// AUC plus the DeLong structural components per positive (`v10`) and per
/// negative (`v01`) observation.
pub fn auc_components(scores: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n = scores.len();
    if labels.len() != n {
        return Err(Error::input("scores and labels must align"));
    }
    let pos: Vec<usize> = (0..n).filter(|&i| labels[i] == 1.0).collect();
    let neg: Vec<usize> = (0..n).filter(|&i| labels[i] == 0.0).collect();
    let (m, k) = (pos.len(), neg.len());
    if m == 0 || k == 0 {
        return Err(Error::input("AUC needs both classes present"));
    }
    let overall = midranks(scores);
    let pos_scores: Vec<f64> = pos.iter().map(|&i| scores[i]).collect();
    let neg_scores: Vec<f64> = neg.iter().map(|&i| scores[i]).collect();
    let pos_ranks = midranks(&pos_scores);
    let neg_ranks = midranks(&neg_scores);

    let v10: Vec<f64> = pos
        .iter()
        .enumerate()
        .map(|(j, &i)| (overall[i] - pos_ranks[j]) / k as f64)
        .collect();
    let v01: Vec<f64> = neg
        .iter()
        .enumerate()
        .map(|(j, &i)| 1.0 - (overall[i] - neg_ranks[j]) / m as f64)
        .collect();
    let auc = v10.iter().sum::<f64>() / m as f64;
    Ok((auc, v10, v01))
}

/// Plain AUC by midranks.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    auc_components(scores, labels).map(|(a, _, _)| a)
}

pub struct DelongComparison {
    pub auc1: f64,
    pub auc2: f64,
    pub variance: f64,
    pub z: f64,
    /// One-sided p-value for `AUC1 > AUC2`.
    pub p_value: f64,
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if a.len() < 2 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (n - 1.0)
}

/// DeLong test comparing two score vectors on the same labeled rows.
///
/// Degenerate variance yields `p = 1` (cannot reject).
pub fn delong_paired(scores1: &[f64], scores2: &[f64], labels: &[f64]) -> Result<DelongComparison> {
    let (auc1, v10_1, v01_1) = auc_components(scores1, labels)?;
    let (auc2, v10_2, v01_2) = auc_components(scores2, labels)?;
    let m = v10_1.len() as f64;
    let k = v01_1.len() as f64;
    let var = (cov(&v10_1, &v10_1) + cov(&v10_2, &v10_2) - 2.0 * cov(&v10_1, &v10_2)) / m
        + (cov(&v01_1, &v01_1) + cov(&v01_2, &v01_2) - 2.0 * cov(&v01_1, &v01_2)) / k;
    if !(var > 0.0) || !var.is_finite() {
        return Ok(DelongComparison {
            auc1,
            auc2,
            variance: var.max(0.0),
            z: 0.0,
            p_value: 1.0,
        });
    }
    let z = (auc1 - auc2) / var.sqrt();
    Ok(DelongComparison {
        auc1,
        auc2,
        variance: var,
        z,
        p_value: stats::normal_sf(z),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngExt;

    #[test]
    fn auc_of_perfect_and_random_scores() {
        let labels = vec![0.0, 0.0, 1.0, 1.0];
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 0.0);
        // All ties.
        assert_eq!(auc(&[0.5, 0.5, 0.5, 0.5], &labels).unwrap(), 0.5);
    }

    #[test]
    fn identical_scores_cannot_reject() {
        let labels: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let scores: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let cmp = delong_paired(&scores, &scores, &labels).unwrap();
        assert_eq!(cmp.auc1, cmp.auc2);
        assert!(cmp.p_value >= 0.5);
    }

    #[test]
    fn strong_auc_gap_is_detected() {
        let mut rng = crate::rng::stream(5, &[0]);
        let n = 1000;
        let labels: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let good: Vec<f64> = labels
            .iter()
            .map(|&y| y + 0.8 * (rng.random::<f64>() - 0.5))
            .collect();
        let noise: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let cmp = delong_paired(&good, &noise, &labels).unwrap();
        assert!(cmp.auc1 > 0.9);
        assert!((cmp.auc2 - 0.5).abs() < 0.1);
        assert!(cmp.p_value < 1e-4, "p = {}", cmp.p_value);
    }

    #[test]
    fn delong_variance_close_to_bootstrap() {
        let mut rng = crate::rng::stream(17, &[1]);
        for trial in 0..20 {
            let n = 300;
            let labels: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
            let signal = 0.2 + 0.05 * trial as f64;
            let s1: Vec<f64> = labels
                .iter()
                .map(|&y| signal * y + rng.random::<f64>())
                .collect();
            let s2: Vec<f64> = labels
                .iter()
                .map(|&y| 0.5 * signal * y + rng.random::<f64>())
                .collect();
            let cmp = delong_paired(&s1, &s2, &labels).unwrap();

            // Bootstrap the AUC difference.
            let mut diffs = Vec::with_capacity(2000);
            for _ in 0..2000 {
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let lb: Vec<f64> = rows.iter().map(|&r| labels[r]).collect();
                if lb.iter().all(|&v| v == 0.0) || lb.iter().all(|&v| v == 1.0) {
                    continue;
                }
                let b1: Vec<f64> = rows.iter().map(|&r| s1[r]).collect();
                let b2: Vec<f64> = rows.iter().map(|&r| s2[r]).collect();
                diffs.push(auc(&b1, &lb).unwrap() - auc(&b2, &lb).unwrap());
            }
            let (_, sd) = crate::stats::mean_sd(&diffs);
            let boot_var = sd * sd;
            let rel = (cmp.variance - boot_var).abs() / boot_var.max(1e-12);
            assert!(
                rel < 0.2,
                "trial {trial}: delong {} vs bootstrap {boot_var} (rel {rel})",
                cmp.variance
            );
        }
    }
}
