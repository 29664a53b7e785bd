use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kernel::{check_width, rbf, rbf_gram, KernelParams};
use crate::error::{Error, Result};

/// Kernel ridge regression in dual form: `predict(z) = Σ c_i k(x_i, z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelRidge {
    pub gamma: f64,
    pub alpha: f64,
    pub support: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
}

impl KernelRidge {
    pub fn predict(&self, z: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(x, c)| c * rbf(x, z, self.gamma))
            .sum()
    }
}

fn check_inputs(x: &[Vec<f64>], y: &[f64], alpha: f64) -> Result<()> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Data(format!(
            "kernel ridge needs matching non-empty inputs ({} rows, {} targets)",
            x.len(),
            y.len()
        )));
    }
    check_width(x, x[0].len())?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be non-negative, got {alpha}")));
    }
    Ok(())
}

/// Solves `(K + alpha I) c = y` by Cholesky factorization.
pub fn fit_kernel_ridge(x: &[Vec<f64>], y: &[f64], alpha: f64, params: KernelParams) -> Result<KernelRidge> {
    check_inputs(x, y, alpha)?;
    let mut k = rbf_gram(x, params)?;
    for i in 0..x.len() {
        k[(i, i)] += alpha;
    }
    let chol = k
        .cholesky()
        .ok_or_else(|| Error::Singular("kernel matrix plus ridge is not positive definite".into()))?;
    let c = chol.solve(&DVector::from_column_slice(y));
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("kernel ridge solution is not finite".into()));
    }
    Ok(KernelRidge {
        gamma: params.gamma,
        alpha,
        support: x.to_vec(),
        coef: c.iter().copied().collect(),
    })
}

/// Weighted kernel ridge: minimizes `Σ w_i (y_i - f(x_i))² + alpha ‖f‖²`.
///
/// With `S = diag(√w)` the coefficients are `c = S u` where `(S K S + alpha I) u = S y`,
/// which keeps the system symmetric. Rows with zero weight get zero coefficients.
pub fn fit_kernel_ridge_weighted(
    x: &[Vec<f64>],
    y: &[f64],
    weights: &[f64],
    alpha: f64,
    params: KernelParams,
) -> Result<KernelRidge> {
    check_inputs(x, y, alpha)?;
    super::check_weights(weights, x.len())?;
    let n = x.len();
    let s: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let k = rbf_gram(x, params)?;
    let mut a = DMatrix::from_fn(n, n, |i, j| s[i] * k[(i, j)] * s[j]);
    for i in 0..n {
        a[(i, i)] += alpha;
    }
    let rhs = DVector::from_iterator(n, y.iter().zip(&s).map(|(y, s)| y * s));
    let u = a
        .cholesky()
        .ok_or_else(|| Error::Singular("weighted kernel system is not positive definite".into()))?
        .solve(&rhs);
    Ok(KernelRidge {
        gamma: params.gamma,
        alpha,
        support: x.to_vec(),
        coef: u.iter().zip(&s).map(|(u, s)| u * s).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::kernel::rbf_kernel_matrix;
    use rand::{Rng, SeedableRng};

    /// Gaussian elimination with partial pivoting on a dense copy.
    pub(crate) fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for r in col + 1..n {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn one_point_shrinks_by_one_plus_alpha() {
        let p = KernelParams::new(1.0).unwrap();
        let m = fit_kernel_ridge(&[vec![0.5, 2.0]], &[3.0], 0.5, p).unwrap();
        assert!((m.predict(&[0.5, 2.0]) - 3.0 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn interpolates_without_ridge() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let y = vec![1.0, -2.0, 0.5, 4.0, 3.0, 0.0];
        let m = fit_kernel_ridge(&x, &y, 0.0, KernelParams::new(1.0).unwrap()).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((m.predict(xi) - yi).abs() < 1e-6);
        }
    }

    #[test]
    fn singular_without_ridge_on_duplicates() {
        let x = vec![vec![1.0], vec![1.0]];
        let err = fit_kernel_ridge(&x, &[1.0, 2.0], 0.0, KernelParams::new(1.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }

    #[test]
    fn matches_dense_solve() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..30).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = (0..30).map(|_| rng.random::<f64>() * 10.0).collect();
        let p = KernelParams::new(0.7).unwrap();
        let m = fit_kernel_ridge(&x, &y, 0.3, p).unwrap();
        let k = rbf_kernel_matrix(&x, &x, p).unwrap();
        let a: Vec<Vec<f64>> = (0..30)
            .map(|i| (0..30).map(|j| k[(i, j)] + if i == j { 0.3 } else { 0.0 }).collect())
            .collect();
        let c = dense_solve(a, y);
        for (u, v) in m.coef.iter().zip(&c) {
            assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn training_mse_grows_with_alpha() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 4.0]).collect();
        let y: Vec<f64> = x.iter().map(|v| (v[0] * 1.3).sin() + 0.1 * v[0]).collect();
        let p = KernelParams::new(0.5).unwrap();
        let mse = |alpha: f64| {
            let m = fit_kernel_ridge(&x, &y, alpha, p).unwrap();
            x.iter().zip(&y).map(|(xi, yi)| (m.predict(xi) - yi).powi(2)).sum::<f64>() / 20.0
        };
        let alphas = [0.0, 1e-3, 0.1, 1.0, 10.0];
        for w in alphas.windows(2) {
            assert!(mse(w[0]) <= mse(w[1]) + 1e-12);
        }
    }

    #[test]
    fn uniform_weights_match_unweighted() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 3.0]).collect();
        let y: Vec<f64> = x.iter().map(|v| v[0].cos()).collect();
        let p = KernelParams::new(1.0).unwrap();
        let a = fit_kernel_ridge(&x, &y, 0.2, p).unwrap();
        let b = fit_kernel_ridge_weighted(&x, &y, &[1.0; 10], 0.2, p).unwrap();
        for (u, v) in a.coef.iter().zip(&b.coef) {
            assert!((u - v).abs() < 1e-10);
        }
    }
}
