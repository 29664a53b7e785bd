//! RBF kernel `k(x, z) = exp(-‖x - z‖² / γ)`.
//!
//! Note the convention: `γ` divides the squared distance. Libraries that write the RBF
//! kernel as `exp(-γ‖x - z‖²)` use the reciprocal, so their `γ = 0.01` corresponds to
//! `γ = 100` here.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub gamma: f64,
}

impl KernelParams {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("kernel gamma must be positive, got {gamma}")));
        }
        Ok(KernelParams { gamma })
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-sq_dist(a, b) / gamma).exp()
}

pub(crate) fn check_width(rows: &[Vec<f64>], width: usize) -> Result<()> {
    match rows.iter().find(|r| r.len() != width) {
        Some(r) => Err(Error::DimensionMismatch {
            expected: width,
            got: r.len(),
        }),
        None => Ok(()),
    }
}

/// `K[i][j] = k(x_i, z_j)`.
pub fn rbf_kernel_matrix(x: &[Vec<f64>], z: &[Vec<f64>], params: KernelParams) -> Result<DMatrix<f64>> {
    let width = x.first().or(z.first()).map_or(0, Vec::len);
    check_width(x, width)?;
    check_width(z, width)?;
    let (n, m) = (x.len(), z.len());
    // Column-major storage: column j holds k(., z_j).
    let data: Vec<f64> = (0..m)
        .into_par_iter()
        .flat_map_iter(|j| x.iter().map(move |xi| rbf(xi, &z[j], params.gamma)))
        .collect();
    Ok(DMatrix::from_vec(n, m, data))
}

/// Symmetric kernel matrix of one sample set; only the upper triangle is evaluated.
pub fn rbf_gram(x: &[Vec<f64>], params: KernelParams) -> Result<DMatrix<f64>> {
    let width = x.first().map_or(0, Vec::len);
    check_width(x, width)?;
    let n = x.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| (0..=j).map(|i| rbf(&x[i], &x[j], params.gamma)).collect())
        .collect();
    let mut k = DMatrix::zeros(n, n);
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}
