//! CART regression trees with optional per-row weights.
//!
//! Splits greedily minimize the weighted squared error of the two children, which is
//! the same as maximizing `S_L²/W_L + S_R²/W_R` (`S` weighted target sums, `W` weight
//! sums). Candidate features are scanned in increasing column order and thresholds in
//! increasing order; only a strictly better score replaces the incumbent, so ties go
//! to the lowest column and then the lowest threshold. Thresholds are midpoints
//! between consecutive distinct values and rows with `x <= threshold` go left.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Index of the leaf a row lands in.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut at = 0;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
        } = &self.nodes[at]
        {
            at = if x[*feature] <= *threshold { *left } else { *right };
        }
        at
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Minimum number of rows (counting bootstrap duplicates) in each leaf.
    pub min_leaf: usize,
    /// Features considered per split; `None` means all.
    pub max_features: Option<usize>,
}

impl TreeParams {
    pub fn new(max_depth: usize) -> Self {
        TreeParams {
            max_depth,
            min_leaf: 1,
            max_features: None,
        }
    }
}

pub(crate) fn validate_xy(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::Data("cannot fit a tree on empty input".into()));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let width = x[0].len();
    super::kernel::check_width(x, width)?;
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Data("tree inputs must be finite".into()));
    }
    Ok(width)
}

/// Scales weights so the largest is exactly 1; uniform weights become all ones.
pub(crate) fn normalized_weights(weights: &[f64]) -> Vec<f64> {
    let max = weights.iter().copied().fold(0.0, f64::max);
    weights.iter().map(|w| w / max).collect()
}

pub fn fit_tree(
    x: &[Vec<f64>],
    y: &[f64],
    max_depth: usize,
    min_leaf: usize,
    weights: Option<&[f64]>,
) -> Result<DecisionTree> {
    validate_xy(x, y)?;
    let w = match weights {
        Some(w) => {
            super::check_weights(w, x.len())?;
            normalized_weights(w)
        }
        None => vec![1.0; x.len()],
    };
    let params = TreeParams {
        max_depth,
        min_leaf: min_leaf.max(1),
        max_features: None,
    };
    Ok(grow(x, y, &w, (0..x.len()).collect(), params, &mut NoRng))
}

/// Source of feature subsets; trees without subsampling never draw.
pub(crate) trait FeatureSampler {
    fn features(&mut self, width: usize, k: Option<usize>) -> Vec<usize>;
}

pub(crate) struct NoRng;

impl FeatureSampler for NoRng {
    fn features(&mut self, width: usize, _k: Option<usize>) -> Vec<usize> {
        (0..width).collect()
    }
}

pub(crate) struct Sampled<'a, R: Rng>(pub &'a mut R);

impl<R: Rng> FeatureSampler for Sampled<'_, R> {
    fn features(&mut self, width: usize, k: Option<usize>) -> Vec<usize> {
        match k {
            Some(k) if k < width => {
                let mut f = sample(self.0, width, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..width).collect(),
        }
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// Grows a tree over `rows` (which may repeat indices).
pub(crate) fn grow<S: FeatureSampler>(
    x: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    rows: Vec<usize>,
    params: TreeParams,
    sampler: &mut S,
) -> DecisionTree {
    let width = x[0].len();
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    // (node slot, rows, depth)
    let mut stack = vec![(0usize, rows, 0usize)];
    let mut order: Vec<usize> = Vec::new();
    while let Some((slot, rows, depth)) = stack.pop() {
        let (wsum, ysum) = rows
            .iter()
            .fold((0.0, 0.0), |(a, b), &i| (a + w[i], b + w[i] * y[i]));
        let value = if wsum > 0.0 { ysum / wsum } else { 0.0 };
        nodes[slot] = Node::Leaf { value };
        if depth >= params.max_depth || rows.len() < 2 * params.min_leaf || wsum <= 0.0 {
            continue;
        }
        let sse: f64 = rows.iter().map(|&i| w[i] * (y[i] - value).powi(2)).sum();
        if sse <= 1e-12 * wsum * (1.0 + value * value) {
            continue;
        }
        let parent_score = ysum * ysum / wsum;
        let mut best: Option<Candidate> = None;
        for f in sampler.features(width, params.max_features) {
            order.clear();
            order.extend_from_slice(&rows);
            order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            let (mut wl, mut sl) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                let i = order[k];
                wl += w[i];
                sl += w[i] * y[i];
                let (lo, hi) = (x[i][f], x[order[k + 1]][f]);
                if lo == hi || k + 1 < params.min_leaf || order.len() - k - 1 < params.min_leaf {
                    continue;
                }
                let (wr, sr) = (wsum - wl, ysum - sl);
                if wl <= 0.0 || wr <= 1e-12 * wsum {
                    continue;
                }
                let score = sl * sl / wl + sr * sr / wr;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mid = lo + (hi - lo) / 2.0;
                    best = Some(Candidate {
                        feature: f,
                        threshold: if mid < hi { mid } else { lo },
                        score,
                    });
                }
            }
        }
        let Some(split) = best else { continue };
        if split.score <= parent_score * (1.0 + 1e-12) {
            continue;
        }
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| x[i][split.feature] <= split.threshold);
        let left = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        let right = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[slot] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        stack.push((right, right_rows, depth + 1));
        stack.push((left, left_rows, depth + 1));
    }
    DecisionTree { nodes }
}
