//! Transfer learning from labelled source roads to unlabelled target roads:
//! instance weighting by kernel mean matching ([`kmm`]) for the classical models and
//! MMD-regularized fine-tuning ([`da`]) for the LSTM.

pub mod da;
pub mod kmm;
pub mod mmd;

pub use da::{da_finetune, AdaptMode, DaConfig, DaResult};
pub use kmm::{kmm_weights, KmmConfig, KmmResult};
pub use mmd::{mmd2, mmd2_with, MmdEstimator};

use crate::error::{Error, Result};
use crate::regress::{fit_model, Hyperparams, Model, ModelKind};

/// Fits a classical model with per-row source weights.
pub fn fit_weighted(
    kind: ModelKind,
    xs: &[Vec<f64>],
    ys: &[f64],
    alpha: &[f64],
    hyper: &Hyperparams,
    seed: u64,
) -> Result<Model> {
    if alpha.iter().all(|a| *a == 0.0) {
        return Err(Error::Data("all instance weights are zero".into()));
    }
    fit_model(kind, hyper, xs, ys, Some(alpha), seed)
}
