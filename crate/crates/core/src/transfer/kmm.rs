//! Kernel mean matching: source-row weights whose weighted kernel mean matches the
//! target's.
//!
//! ```text
//! min ½ αᵀKα - κᵀα   s.t.  0 ≤ α_i ≤ B,  |Σα - N_s| ≤ N_s ε
//! K_ij = k(x_i, x_j),   κ_i = (N_s/N_t) Σ_j k(x_i, x^t_j)
//! ```
//!
//! Solved by accelerated projected gradient with step `1/L`, `L` the largest
//! eigenvalue of `K` (power iteration). The projection onto the box intersected with
//! the sum band is exact: `clip(v - τ, 0, B)` with the shift `τ` found by bisection.
//! Momentum restarts whenever the objective rises, so iterates never do worse than the
//! uniform start `α = 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mmd::median_heuristic;
use crate::error::{Error, Result};
use crate::regress::kernel::{check_width, rbf, rbf_gram, KernelParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmmConfig {
    /// Upper bound `B` on each weight.
    pub b: f64,
    /// Slack `ε` of the sum constraint; `None` uses `(√N_s - 1)/√N_s`.
    pub eps: Option<f64>,
    /// Kernel width; `None` uses the median squared distance of the pooled samples.
    pub gamma: Option<f64>,
    /// Stop once the relative objective change falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for KmmConfig {
    fn default() -> Self {
        KmmConfig {
            b: 1000.0,
            eps: None,
            gamma: None,
            tolerance: 1e-6,
            max_iterations: 5000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmmResult {
    pub alpha: Vec<f64>,
    pub objective: f64,
    /// Objective at `α = 1`.
    pub uniform_objective: f64,
    /// `|Σα - N_s| - N_s ε`; non-positive when the sum constraint holds.
    pub sum_residual: f64,
    /// Largest box violation (zero when every weight is inside `[0, B]`).
    pub box_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gamma: f64,
    pub eps: f64,
}

pub fn default_eps(n_source: usize) -> f64 {
    let r = (n_source as f64).sqrt();
    (r - 1.0) / r
}

/// Euclidean projection of `v` onto `{0 ≤ α ≤ b, lo ≤ Σα ≤ hi}`.
pub fn project(v: &[f64], b: f64, lo: f64, hi: f64) -> Vec<f64> {
    let shifted = |tau: f64| -> f64 { v.iter().map(|x| (x - tau).clamp(0.0, b)).sum() };
    let s0 = shifted(0.0);
    let goal = if s0 > hi {
        hi
    } else if s0 < lo {
        lo
    } else {
        return v.iter().map(|x| x.clamp(0.0, b)).collect();
    };
    // Σ clip(v - τ) is non-increasing in τ; bracket then bisect.
    let vmax = v.iter().copied().fold(f64::MIN, f64::max);
    let vmin = v.iter().copied().fold(f64::MAX, f64::min);
    let (mut a, mut z) = (vmin - b - 1.0, vmax + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (a + z);
        if shifted(mid) > goal {
            a = mid;
        } else {
            z = mid;
        }
        if z - a <= 1e-15 * (1.0 + a.abs().max(z.abs())) {
            break;
        }
    }
    let tau = 0.5 * (a + z);
    v.iter().map(|x| (x - tau).clamp(0.0, b)).collect()
}

fn power_iteration(k: &nalgebra::DMatrix<f64>) -> f64 {
    let n = k.nrows();
    let mut x = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..100 {
        let y = k * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return 1.0;
        }
        let next = norm;
        x = y / norm;
        if (next - lambda).abs() <= 1e-9 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda
}

pub fn kmm_weights(xs: &[Vec<f64>], xt: &[Vec<f64>], cfg: &KmmConfig) -> Result<KmmResult> {
    if xs.is_empty() || xt.is_empty() {
        return Err(Error::Data("kmm needs non-empty source and target samples".into()));
    }
    check_width(xs, xs[0].len())?;
    check_width(xt, xs[0].len())?;
    if !(cfg.b > 0.0) {
        return Err(Error::Config("kmm bound B must be positive".into()));
    }
    let ns = xs.len();
    let eps = cfg.eps.unwrap_or_else(|| default_eps(ns));
    if eps < 0.0 {
        return Err(Error::Config("kmm eps must be non-negative".into()));
    }
    let gamma = match cfg.gamma {
        Some(g) => g,
        None => {
            let pooled: Vec<Vec<f64>> = xs.iter().chain(xt).cloned().collect();
            median_heuristic(&pooled, 1000)
        }
    };
    let params = KernelParams::new(gamma)?;
    let k = rbf_gram(xs, params)?;
    let ratio = ns as f64 / xt.len() as f64;
    let kappa: Vec<f64> = xs
        .par_iter()
        .map(|x| ratio * xt.iter().map(|z| rbf(x, z, gamma)).sum::<f64>())
        .collect();
    let kappa = nalgebra::DVector::from_vec(kappa);
    let objective = |a: &nalgebra::DVector<f64>, ka: &nalgebra::DVector<f64>| 0.5 * a.dot(ka) - kappa.dot(a);

    let l = power_iteration(&k) * 1.01;
    let (lo, hi) = (ns as f64 * (1.0 - eps), ns as f64 * (1.0 + eps));
    let mut alpha = nalgebra::DVector::from_element(ns, 1.0);
    let uniform = objective(&alpha, &(&k * &alpha));
    let mut f = uniform;
    let mut momentum = alpha.clone();
    let mut t = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let grad = &k * &momentum - &kappa;
        let step: Vec<f64> = momentum.iter().zip(grad.iter()).map(|(m, g)| m - g / l).collect();
        let next = nalgebra::DVector::from_vec(project(&step, cfg.b, lo, hi));
        let k_next = &k * &next;
        let f_next = objective(&next, &k_next);
        if f_next > f {
            // Restart from the last accepted point without momentum.
            if momentum == alpha {
                converged = true;
                break;
            }
            momentum = alpha.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        momentum = &next + (&next - &alpha) * ((t - 1.0) / t_next);
        t = t_next;
        let change = (f - f_next).abs() / f.abs().max(1e-12);
        alpha = next;
        f = f_next;
        if change < cfg.tolerance {
            converged = true;
            break;
        }
    }
    let sum: f64 = alpha.iter().sum();
    let box_residual = alpha
        .iter()
        .map(|a| (-a).max(a - cfg.b).max(0.0))
        .fold(0.0, f64::max);
    Ok(KmmResult {
        alpha: alpha.iter().copied().collect(),
        objective: f,
        uniform_objective: uniform,
        sum_residual: (sum - ns as f64).abs() - ns as f64 * eps,
        box_residual,
        iterations,
        converged,
        gamma,
        eps,
    })
}

/// Writes `row,weight` lines.
pub fn write_weights(path: &std::path::Path, alpha: &[f64]) -> Result<()> {
    let mut out = String::from("row,weight\n");
    for (i, a) in alpha.iter().enumerate() {
        out.push_str(&format!("{i},{a}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_gets_unit_weight() {
        let r = kmm_weights(&[vec![0.3, 1.0]], &[vec![0.3, 1.0]], &KmmConfig::default()).unwrap();
        assert!((r.alpha[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_hits_the_band() {
        let p = project(&[5.0, 5.0, 5.0, -1.0], 4.0, 2.0, 6.0);
        let s: f64 = p.iter().sum();
        assert!((s - 6.0).abs() < 1e-9);
        assert!(p.iter().all(|v| (0.0..=4.0).contains(v)));
        assert_eq!(project(&[0.5, 1.5], 4.0, 1.0, 3.0), vec![0.5, 1.5]);
    }

    #[test]
    fn projection_is_nearest_point_on_small_grid() {
        let v = [2.7, -0.4, 1.1];
        let p = project(&v, 2.0, 2.5, 3.0);
        let dist = |a: &[f64]| a.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        let best = dist(&p);
        let steps = 40;
        for i in 0..=steps {
            for j in 0..=steps {
                for k in 0..=steps {
                    let q = [2.0 * i as f64 / steps as f64, 2.0 * j as f64 / steps as f64, 2.0 * k as f64 / steps as f64];
                    let s: f64 = q.iter().sum();
                    if (2.5..=3.0).contains(&s) {
                        assert!(dist(&q) >= best - 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn shifted_target_never_worse_than_uniform() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 10.0]).collect();
        let xt: Vec<Vec<f64>> = (0..30).map(|i| vec![2.0 + i as f64 / 15.0]).collect();
        let r = kmm_weights(&xs, &xt, &KmmConfig::default()).unwrap();
        assert!(r.objective <= r.uniform_objective);
        assert!(r.sum_residual <= 1e-6 && r.box_residual == 0.0);
        assert!(r.alpha[39] > r.alpha[0]);
    }
}
