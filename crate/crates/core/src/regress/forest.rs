//! Bagged regression forests.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, normalized_weights, validate_xy, DecisionTree, Sampled, TreeParams};
use crate::error::{Error, Result};
use crate::rng::{domain, substream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features drawn per split; `None` uses `⌈p/3⌉`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl ForestParams {
    pub fn new(n_trees: usize, max_depth: usize, seed: u64) -> Self {
        ForestParams {
            n_trees,
            max_depth,
            min_leaf: 1,
            max_features: None,
            bootstrap: true,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
}

impl Forest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

pub fn default_max_features(width: usize) -> usize {
    width.div_ceil(3).max(1)
}

/// Fits `n_trees` trees in parallel, tree `k` on its own RNG substream.
///
/// With weights and bootstrap, rows are drawn with probability proportional to their
/// weight and each tree sees unit weights on the drawn multiset. Without bootstrap the
/// weights go straight into the split criterion.
pub fn fit_forest(x: &[Vec<f64>], y: &[f64], params: ForestParams, weights: Option<&[f64]>) -> Result<Forest> {
    let width = validate_xy(x, y)?;
    if params.n_trees == 0 {
        return Err(Error::Config("a forest needs at least one tree".into()));
    }
    if let Some(w) = weights {
        super::check_weights(w, x.len())?;
    }
    let n = x.len();
    let max_features = params.max_features.unwrap_or_else(|| default_max_features(width)).clamp(1, width.max(1));
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf.max(1),
        max_features: Some(max_features),
    };
    let draw = match (weights, params.bootstrap) {
        (Some(w), true) => Some(WeightedIndex::new(w).map_err(|e| Error::Data(format!("bad weights: {e}")))?),
        _ => None,
    };
    let split_weights = match (weights, params.bootstrap) {
        (Some(w), false) => normalized_weights(w),
        _ => vec![1.0; n],
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(params.seed, domain::FOREST, k as u64, 0, 0);
            let rows: Vec<usize> = match (&draw, params.bootstrap) {
                (Some(d), _) => (0..n).map(|_| d.sample(&mut rng)).collect(),
                (None, true) => (0..n).map(|_| rng.random_range(0..n)).collect(),
                (None, false) => (0..n).collect(),
            };
            grow(x, y, &split_weights, rows, tree_params, &mut Sampled(&mut rng))
        })
        .collect();
    Ok(Forest { trees })
}
