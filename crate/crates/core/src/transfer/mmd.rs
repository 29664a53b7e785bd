//! Squared maximum mean discrepancy with the RBF kernel `exp(-‖a - b‖²/γ)`.
//!
//! Biased (V-statistic) estimator:
//!
//! ```text
//! mmd² = mean k(A, A) + mean k(B, B) - 2 mean k(A, B)
//! ```
//!
//! The unbiased variant drops the diagonal of the two within-sample terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regress::kernel::{rbf, sq_dist};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MmdEstimator {
    #[default]
    Biased,
    Unbiased,
}

fn check(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64, est: MmdEstimator) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Data("mmd needs two non-empty samples".into()));
    }
    if est == MmdEstimator::Unbiased && (a.len() < 2 || b.len() < 2) {
        return Err(Error::Data("unbiased mmd needs at least two rows per sample".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("mmd kernel width must be positive, got {gamma}")));
    }
    let w = a[0].len();
    if let Some(r) = a.iter().chain(b).find(|r| r.len() != w) {
        return Err(Error::DimensionMismatch {
            expected: w,
            got: r.len(),
        });
    }
    Ok(())
}

fn within(x: &[Vec<f64>], gamma: f64, est: MmdEstimator) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += 2.0 * rbf(&x[i], &x[j], gamma);
        }
    }
    match est {
        MmdEstimator::Biased => (s + n as f64) / (n * n) as f64,
        MmdEstimator::Unbiased => s / (n * (n - 1)) as f64,
    }
}

pub fn mmd2_with(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64, est: MmdEstimator) -> Result<f64> {
    check(a, b, gamma, est)?;
    let cross: f64 = a.iter().map(|x| b.iter().map(|z| rbf(x, z, gamma)).sum::<f64>()).sum();
    let v = within(a, gamma, est) + within(b, gamma, est) - 2.0 * cross / (a.len() * b.len()) as f64;
    Ok(match est {
        MmdEstimator::Biased => v.max(0.0),
        MmdEstimator::Unbiased => v,
    })
}

/// Biased estimate, clamped at zero against rounding.
pub fn mmd2(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64) -> Result<f64> {
    mmd2_with(a, b, gamma, MmdEstimator::Biased)
}

/// Estimate plus its gradient with respect to every row of `a` and of `b`.
pub fn mmd2_with_grad(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    gamma: f64,
    est: MmdEstimator,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    check(a, b, gamma, est)?;
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (wa, wb) = match est {
        MmdEstimator::Biased => (1.0 / (n * n), 1.0 / (m * m)),
        MmdEstimator::Unbiased => (1.0 / (n * (n - 1.0)), 1.0 / (m * (m - 1.0))),
    };
    let wc = 2.0 / (n * m);
    let d = a[0].len();
    let mut ga = vec![vec![0.0; d]; a.len()];
    let mut gb = vec![vec![0.0; d]; b.len()];
    let mut value = 0.0;
    // ∂k(x, z)/∂x = -2 (x - z) k / γ
    let mut pair = |x: &[f64], z: &[f64], coef: f64, gx: &mut [f64], gz: &mut [f64]| {
        let k = rbf(x, z, gamma);
        value += coef * k;
        let s = -2.0 * coef * k / gamma;
        for t in 0..d {
            let diff = x[t] - z[t];
            gx[t] += s * diff;
            gz[t] -= s * diff;
        }
    };
    for (i, j) in upper_pairs(a.len()) {
        let (lo, hi) = ga.split_at_mut(j);
        pair(&a[i], &a[j], 2.0 * wa, &mut lo[i], &mut hi[0]);
    }
    for (i, j) in upper_pairs(b.len()) {
        let (lo, hi) = gb.split_at_mut(j);
        pair(&b[i], &b[j], 2.0 * wb, &mut lo[i], &mut hi[0]);
    }
    for i in 0..a.len() {
        for j in 0..b.len() {
            pair(&a[i], &b[j], -wc, &mut ga[i], &mut gb[j]);
        }
    }
    if est == MmdEstimator::Biased {
        value += wa * n + wb * m;
    }
    Ok((value, ga, gb))
}

fn upper_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Median of pairwise squared distances over at most `cap` evenly strided rows.
pub fn median_heuristic(rows: &[Vec<f64>], cap: usize) -> f64 {
    let stride = rows.len().div_ceil(cap.max(2)).max(1);
    let pick: Vec<&Vec<f64>> = rows.iter().step_by(stride).collect();
    let mut d: Vec<f64> = upper_pairs(pick.len()).map(|(i, j)| sq_dist(pick[i], pick[j])).collect();
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if *m > 0.0 {
        *m
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_give_zero() {
        let a = vec![vec![0.0, 1.0], vec![2.0, 0.5], vec![1.0, 1.0]];
        assert!(mmd2(&a, &a, 1.5).unwrap() <= 1e-12);
        assert!(mmd2(&a, &[vec![1.0]], 1.0).is_err());
        assert!(mmd2(&a, &[], 1.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let a = vec![vec![0.1, 0.4], vec![-0.3, 0.2], vec![0.5, -0.1]];
        let b = vec![vec![0.9, 0.3], vec![0.2, 0.8]];
        for est in [MmdEstimator::Biased, MmdEstimator::Unbiased] {
            let (v, ga, gb) = mmd2_with_grad(&a, &b, 0.7, est).unwrap();
            assert!((v - mmd2_with(&a, &b, 0.7, est).unwrap()).abs() < 1e-12);
            let h = 1e-6;
            for i in 0..a.len() {
                for t in 0..2 {
                    let mut p = a.clone();
                    p[i][t] += h;
                    let mut q = a.clone();
                    q[i][t] -= h;
                    let num = (mmd2_with(&p, &b, 0.7, est).unwrap() - mmd2_with(&q, &b, 0.7, est).unwrap()) / (2.0 * h);
                    assert!((num - ga[i][t]).abs() < 1e-7);
                }
            }
            for j in 0..b.len() {
                let mut p = b.clone();
                p[j][0] += h;
                let mut q = b.clone();
                q[j][0] -= h;
                let num = (mmd2_with(&a, &p, 0.7, est).unwrap() - mmd2_with(&a, &q, 0.7, est).unwrap()) / (2.0 * h);
                assert!((num - gb[j][0]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn median_of_three_points() {
        let rows = vec![vec![0.0], vec![1.0], vec![3.0]];
        // squared distances 1, 9, 4
        assert_eq!(median_heuristic(&rows, 10), 4.0);
    }
}
