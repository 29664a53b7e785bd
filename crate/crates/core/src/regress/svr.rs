//! ε-insensitive support vector regression trained by SMO.
//!
//! The dual is written over `2n` variables `a = [α; α*]` with signs `s = [+1; -1]`:
//!
//! ```text
//! min ½ aᵀQa + pᵀa   s.t.  sᵀa = 0,  0 ≤ a_t ≤ C_t
//! Q_tu = s_t s_u k(x_t, x_u),   p = [ε - y; ε + y]
//! ```
//!
//! Working pairs are chosen by maximal violation with second-order gain, and the
//! solver stops once the KKT gap `max_{I_up} -s_t G_t + max_{I_low} s_t G_t` falls
//! below the tolerance.

use serde::{Deserialize, Serialize};

use super::kernel::{check_width, rbf, rbf_gram, KernelParams};
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvrOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SvrOptions {
    fn default() -> Self {
        SvrOptions {
            tolerance: 1e-3,
            max_iterations: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Svr {
    pub gamma: f64,
    pub c: f64,
    pub epsilon: f64,
    /// Support vectors (rows with a non-zero dual coefficient).
    pub support: Vec<Vec<f64>>,
    /// `α_i - α*_i` of each support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    /// Dual objective `½ βᵀKβ - yᵀβ + ε Σ|β|` at the solution.
    pub objective: f64,
    pub iterations: usize,
}

impl Svr {
    pub fn predict(&self, z: &[f64]) -> f64 {
        self.bias
            + self
                .support
                .iter()
                .zip(&self.coef)
                .map(|(x, c)| c * rbf(x, z, self.gamma))
                .sum::<f64>()
    }
}

/// Full dual solution, including the per-row `α` and `α*`.
#[derive(Clone, Debug)]
pub struct SvrSolution {
    pub alpha: Vec<f64>,
    pub alpha_star: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_gap: f64,
}

impl SvrSolution {
    pub fn beta(&self) -> Vec<f64> {
        self.alpha.iter().zip(&self.alpha_star).map(|(a, b)| a - b).collect()
    }
}

pub fn fit_svr(x: &[Vec<f64>], y: &[f64], c: f64, epsilon: f64, params: KernelParams) -> Result<Svr> {
    let bounds = vec![c; x.len()];
    let sol = solve(x, y, &bounds, c, epsilon, params, SvrOptions::default())?;
    Ok(assemble(x, &sol, c, epsilon, params))
}

/// Per-row box `0 ≤ α_i, α*_i ≤ C w_i`.
pub fn fit_svr_weighted(
    x: &[Vec<f64>],
    y: &[f64],
    weights: &[f64],
    c: f64,
    epsilon: f64,
    params: KernelParams,
) -> Result<Svr> {
    super::check_weights(weights, x.len())?;
    let bounds: Vec<f64> = weights.iter().map(|w| c * w).collect();
    let sol = solve(x, y, &bounds, c, epsilon, params, SvrOptions::default())?;
    Ok(assemble(x, &sol, c, epsilon, params))
}

fn assemble(x: &[Vec<f64>], sol: &SvrSolution, c: f64, epsilon: f64, params: KernelParams) -> Svr {
    let beta = sol.beta();
    let (support, coef): (Vec<_>, Vec<_>) = x
        .iter()
        .zip(&beta)
        .filter(|(_, b)| **b != 0.0)
        .map(|(x, b)| (x.clone(), *b))
        .unzip();
    Svr {
        gamma: params.gamma,
        c,
        epsilon,
        support,
        coef,
        bias: sol.bias,
        objective: sol.objective,
        iterations: sol.iterations,
    }
}

/// Solves the dual with per-row upper bounds `bounds[i]`.
pub fn solve(
    x: &[Vec<f64>],
    y: &[f64],
    bounds: &[f64],
    c: f64,
    epsilon: f64,
    params: KernelParams,
    opts: SvrOptions,
) -> Result<SvrSolution> {
    if x.is_empty() || x.len() != y.len() || bounds.len() != x.len() {
        return Err(Error::Data("SVR needs matching non-empty inputs".into()));
    }
    check_width(x, x[0].len())?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Config(format!("C must be positive, got {c}")));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("epsilon must be non-negative, got {epsilon}")));
    }
    let n = x.len();
    let k = rbf_gram(x, params)?;
    let l = 2 * n;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let row = |t: usize| t % n;
    let ub: Vec<f64> = (0..l).map(|t| bounds[row(t)]).collect();
    let p: Vec<f64> = (0..l)
        .map(|t| if t < n { epsilon - y[t] } else { epsilon + y[t - n] })
        .collect();
    let qd: Vec<f64> = (0..l).map(|t| k[(row(t), row(t))]).collect();
    let q = |t: usize, u: usize| sign(t) * sign(u) * k[(row(t), row(u))];

    let mut a = vec![0.0; l];
    let mut g = p.clone();
    let is_upper = |a: &[f64], t: usize| a[t] >= ub[t];
    let is_lower = |a: &[f64], t: usize| a[t] <= 0.0;

    let mut iterations = 0;
    let mut gap;
    loop {
        // Working set selection (maximal violating pair, second-order choice of j).
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..l {
            if sign(t) > 0.0 {
                if !is_upper(&a, t) && -g[t] >= gmax {
                    gmax = -g[t];
                    i_sel = Some(t);
                }
            } else if !is_lower(&a, t) && g[t] >= gmax {
                gmax = g[t];
                i_sel = Some(t);
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        if let Some(i) = i_sel {
            for t in 0..l {
                let (grad_diff, quad) = if sign(t) > 0.0 {
                    if is_lower(&a, t) {
                        continue;
                    }
                    gmax2 = gmax2.max(g[t]);
                    (gmax + g[t], qd[i] + qd[t] - 2.0 * sign(i) * q(i, t))
                } else {
                    if is_upper(&a, t) {
                        continue;
                    }
                    gmax2 = gmax2.max(-g[t]);
                    (gmax - g[t], qd[i] + qd[t] + 2.0 * sign(i) * q(i, t))
                };
                if grad_diff > 0.0 {
                    let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        gap = gmax + gmax2;
        let (Some(i), Some(j)) = (i_sel, j_sel) else {
            break;
        };
        if gap < opts.tolerance {
            break;
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NotConverged {
                iterations,
                residual: gap,
            });
        }
        iterations += 1;

        let (ci, cj) = (ub[i], ub[j]);
        let (old_i, old_j) = (a[i], a[j]);
        let qij = q(i, j);
        if sign(i) != sign(j) {
            let mut quad = qd[i] + qd[j] + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-g[i] - g[j]) / quad;
            let diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if diff > 0.0 {
                if a[j] < 0.0 {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if diff > ci - cj {
                if a[i] > ci {
                    a[i] = ci;
                    a[j] = ci - diff;
                }
            } else if a[j] > cj {
                a[j] = cj;
                a[i] = cj + diff;
            }
        } else {
            let mut quad = qd[i] + qd[j] - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (g[i] - g[j]) / quad;
            let sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if sum > ci {
                if a[i] > ci {
                    a[i] = ci;
                    a[j] = sum - ci;
                }
            } else if a[j] < 0.0 {
                a[j] = 0.0;
                a[i] = sum;
            }
            if sum > cj {
                if a[j] > cj {
                    a[j] = cj;
                    a[i] = sum - cj;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = sum;
            }
        }
        let (di, dj) = (a[i] - old_i, a[j] - old_j);
        for t in 0..l {
            g[t] += q(i, t) * di + q(j, t) * dj;
        }
    }

    // Bias from free variables, or the midpoint of the feasible interval.
    let (mut upper, mut lower, mut free_sum, mut free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..l {
        let yg = sign(t) * g[t];
        if is_upper(&a, t) {
            if sign(t) < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if is_lower(&a, t) {
            if sign(t) > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        (upper + lower) / 2.0
    };

    let alpha = a[..n].to_vec();
    let alpha_star = a[n..].to_vec();
    let beta: Vec<f64> = alpha.iter().zip(&alpha_star).map(|(u, v)| u - v).collect();
    let objective = dual_objective(&k, y, epsilon, &beta);
    Ok(SvrSolution {
        alpha,
        alpha_star,
        bias: -rho,
        objective,
        iterations,
        kkt_gap: gap.max(0.0),
    })
}

/// `½ βᵀKβ - yᵀβ + ε Σ|β|`.
pub fn dual_objective(k: &nalgebra::DMatrix<f64>, y: &[f64], epsilon: f64, beta: &[f64]) -> f64 {
    let n = beta.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += beta[i] * beta[j] * k[(i, j)];
        }
    }
    0.5 * quad - y.iter().zip(beta).map(|(y, b)| y * b).sum::<f64>()
        + epsilon * beta.iter().map(|b| b.abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_targets_need_no_support_vectors() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y = vec![4.2; 8];
        let m = fit_svr(&x, &y, 10.0, 0.1, KernelParams::new(1.0).unwrap()).unwrap();
        assert!(m.support.is_empty());
        for z in [vec![0.0, 0.0], vec![100.0, -3.0]] {
            assert!((m.predict(&z) - 4.2).abs() < 1e-12);
        }
    }

    #[test]
    fn dual_feasibility_and_tube() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 8.0]).collect();
        let y: Vec<f64> = x.iter().map(|v| (v[0] * 1.7).sin() * 3.0 + 0.3 * v[0]).collect();
        let (c, eps) = (5.0, 0.2);
        let params = KernelParams::new(0.8).unwrap();
        let bounds = vec![c; x.len()];
        let sol = solve(&x, &y, &bounds, c, eps, params, SvrOptions::default()).unwrap();
        let beta = sol.beta();
        assert!(beta.iter().sum::<f64>().abs() < 1e-9);
        for (a, b) in sol.alpha.iter().zip(&sol.alpha_star) {
            assert!((0.0..=c).contains(a) && (0.0..=c).contains(b));
        }
        let tight = SvrOptions {
            tolerance: 1e-9,
            ..SvrOptions::default()
        };
        let sol = solve(&x, &y, &bounds, c, eps, params, tight).unwrap();
        let m = assemble(&x, &sol, c, eps, params);
        let beta = sol.beta();
        for (i, (xi, yi)) in x.iter().zip(&y).enumerate() {
            if beta[i] == 0.0 {
                assert!((m.predict(xi) - yi).abs() <= eps + 1e-6, "row {i}");
            }
        }
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 / 5.0]).collect();
        let y: Vec<f64> = x.iter().map(|v| v[0].sin()).collect();
        let opts = SvrOptions {
            tolerance: 1e-9,
            max_iterations: 2,
        };
        let err = solve(&x, &y, &[10.0; 30], 10.0, 0.01, KernelParams::new(1.0).unwrap(), opts).unwrap_err();
        match err {
            Error::NotConverged { iterations, residual } => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-9);
            }
            other => panic!("unexpected {other}"),
        }
    }
}
