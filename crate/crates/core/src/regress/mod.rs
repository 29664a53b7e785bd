//! Classical regressors: kernel ridge, ε-SVR, CART trees and random forests.
//!
//! [`fit_model`] dispatches on [`ModelKind`] with a flat map of hyperparameters and
//! returns a serializable [`RegressorArtifact`].

pub mod forest;
pub mod grid;
pub mod kernel;
pub mod krr;
pub mod svr;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Scaler;

pub use forest::{fit_forest, Forest, ForestParams};
pub use grid::{grid_search, GridResult, GridSpec};
pub use kernel::{rbf_kernel_matrix, KernelParams};
pub use krr::{fit_kernel_ridge, fit_kernel_ridge_weighted, KernelRidge};
pub use svr::{fit_svr, fit_svr_weighted, Svr};
pub use tree::{fit_tree, DecisionTree};

pub const ARTIFACT_VERSION: u32 = 1;

/// Weights must be finite, non-negative, one per row, with a positive sum.
pub(crate) fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Data("weights must be finite and non-negative".into()));
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Data("weights sum to zero".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Kr,
    Svr,
    Dt,
    Rf,
    Lstm,
}

impl ModelKind {
    pub const CLASSICAL: [ModelKind; 4] = [ModelKind::Kr, ModelKind::Svr, ModelKind::Dt, ModelKind::Rf];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Kr => "kr",
            ModelKind::Svr => "svr",
            ModelKind::Dt => "dt",
            ModelKind::Rf => "rf",
            ModelKind::Lstm => "lstm",
        }
    }

    pub fn is_kernel(self) -> bool {
        matches!(self, ModelKind::Kr | ModelKind::Svr)
    }

    /// Default hyperparameters.
    pub fn defaults(self) -> Hyperparams {
        let pairs: &[(&str, f64)] = match self {
            ModelKind::Kr => &[("alpha", 1.0), ("gamma", 0.01)],
            ModelKind::Svr => &[("c", 10.0), ("gamma", 0.001), ("epsilon", 0.1)],
            ModelKind::Dt => &[("max_depth", 10.0), ("min_leaf", 1.0)],
            ModelKind::Rf => &[("max_depth", 30.0), ("min_leaf", 1.0), ("n_trees", 100.0)],
            ModelKind::Lstm => &[],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    pub fn allowed_keys(self) -> &'static [&'static str] {
        match self {
            ModelKind::Kr => &["alpha", "gamma"],
            ModelKind::Svr => &["c", "gamma", "epsilon"],
            ModelKind::Dt => &["max_depth", "min_leaf"],
            ModelKind::Rf => &["max_depth", "min_leaf", "n_trees", "max_features", "bootstrap"],
            ModelKind::Lstm => &[
                "hidden",
                "dense",
                "window",
                "dropout",
                "learning_rate",
                "epochs",
                "batch_size",
            ],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kr" => Ok(ModelKind::Kr),
            "svr" => Ok(ModelKind::Svr),
            "dt" => Ok(ModelKind::Dt),
            "rf" => Ok(ModelKind::Rf),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

pub type Hyperparams = BTreeMap<String, f64>;

/// Merges `overrides` into the defaults of `kind`, rejecting unknown keys.
pub fn resolve_hyperparams(kind: ModelKind, overrides: &Hyperparams) -> Result<Hyperparams> {
    let mut out = kind.defaults();
    for (k, v) in overrides {
        if !kind.allowed_keys().contains(&k.as_str()) {
            return Err(Error::Config(format!("unknown hyperparameter {k:?} for {kind}")));
        }
        if !v.is_finite() {
            return Err(Error::Config(format!("hyperparameter {k} must be finite")));
        }
        out.insert(k.clone(), *v);
    }
    Ok(out)
}

fn get(h: &Hyperparams, key: &str) -> Result<f64> {
    h.get(key)
        .copied()
        .ok_or_else(|| Error::Config(format!("missing hyperparameter {key}")))
}

fn get_count(h: &Hyperparams, key: &str) -> Result<usize> {
    let v = get(h, key)?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::Config(format!("{key} must be a non-negative integer, got {v}")));
    }
    Ok(v as usize)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Model {
    KernelRidge(KernelRidge),
    Svr(Svr),
    Tree(DecisionTree),
    Forest(Forest),
}

impl Model {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Model::KernelRidge(m) => m.predict(x),
            Model::Svr(m) => m.predict(x),
            Model::Tree(m) => m.predict(x),
            Model::Forest(m) => m.predict(x),
        }
    }
}

/// A fitted classical model with everything needed to apply it to new rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressorArtifact {
    pub format_version: u32,
    pub kind: ModelKind,
    pub hyperparameters: Hyperparams,
    pub seed: u64,
    pub columns: Vec<String>,
    /// Standardization the feature rows went through before fitting.
    pub scaler: Option<Scaler>,
    pub model: Model,
}

impl RegressorArtifact {
    /// Predicts on rows already in the fitted feature space.
    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter()
            .map(|r| {
                if r.len() != self.columns.len() {
                    return Err(Error::DimensionMismatch {
                        expected: self.columns.len(),
                        got: r.len(),
                    });
                }
                Ok(self.model.predict(r))
            })
            .collect()
    }

    /// Predicts after checking the caller's column names match the fitted ones.
    pub fn predict_named(&self, columns: &[String], rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        if columns != self.columns.as_slice() {
            return Err(Error::Config("feature columns differ from the fitted model".into()));
        }
        self.predict(rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let a: RegressorArtifact = serde_json::from_str(s)?;
        if a.format_version != ARTIFACT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {}",
                a.format_version
            )));
        }
        Ok(a)
    }

    pub fn hash(&self) -> String {
        crate::sha256_hex(self.to_json().unwrap_or_default().as_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Fits a classical model; `weights` enables the instance-weighted path.
pub fn fit_model(
    kind: ModelKind,
    hyper: &Hyperparams,
    x: &[Vec<f64>],
    y: &[f64],
    weights: Option<&[f64]>,
    seed: u64,
) -> Result<Model> {
    let h = resolve_hyperparams(kind, hyper)?;
    Ok(match kind {
        ModelKind::Kr => {
            let p = KernelParams::new(get(&h, "gamma")?)?;
            let alpha = get(&h, "alpha")?;
            Model::KernelRidge(match weights {
                Some(w) => fit_kernel_ridge_weighted(x, y, w, alpha, p)?,
                None => fit_kernel_ridge(x, y, alpha, p)?,
            })
        }
        ModelKind::Svr => {
            let p = KernelParams::new(get(&h, "gamma")?)?;
            let (c, eps) = (get(&h, "c")?, get(&h, "epsilon")?);
            if !(c > 0.0) || eps < 0.0 {
                return Err(Error::Config("svr needs c > 0 and epsilon >= 0".into()));
            }
            Model::Svr(match weights {
                Some(w) => fit_svr_weighted(x, y, w, c, eps, p)?,
                None => fit_svr(x, y, c, eps, p)?,
            })
        }
        ModelKind::Dt => Model::Tree(fit_tree(x, y, get_count(&h, "max_depth")?, get_count(&h, "min_leaf")?, weights)?),
        ModelKind::Rf => {
            let mut p = ForestParams::new(get_count(&h, "n_trees")?, get_count(&h, "max_depth")?, seed);
            p.min_leaf = get_count(&h, "min_leaf")?;
            if h.contains_key("max_features") {
                p.max_features = Some(get_count(&h, "max_features")?);
            }
            if let Some(b) = h.get("bootstrap") {
                p.bootstrap = *b != 0.0;
            }
            Model::Forest(fit_forest(x, y, p, weights)?)
        }
        ModelKind::Lstm => {
            return Err(Error::Config("lstm models are trained by the neural module".into()));
        }
    })
}

/// Fits and wraps a model into an artifact.
pub fn train(
    kind: ModelKind,
    hyper: &Hyperparams,
    columns: &[String],
    scaler: Option<Scaler>,
    x: &[Vec<f64>],
    y: &[f64],
    weights: Option<&[f64]>,
    seed: u64,
) -> Result<RegressorArtifact> {
    if let Some(r) = x.iter().find(|r| r.len() != columns.len()) {
        return Err(Error::DimensionMismatch {
            expected: columns.len(),
            got: r.len(),
        });
    }
    let model = fit_model(kind, hyper, x, y, weights, seed)?;
    Ok(RegressorArtifact {
        format_version: ARTIFACT_VERSION,
        kind,
        hyperparameters: resolve_hyperparams(kind, hyper)?,
        seed,
        columns: columns.to_vec(),
        scaler,
        model,
    })
}
