//! MMD-regularized fine-tuning of a pretrained LSTM regressor.
//!
//! Per mini-batch the loss is the source MSE plus `λ Σ_l mmd²(D_l^s, D_l^t)` over the
//! adapted dense layers `l`, where `D_l` are post-activation outputs for the source
//! batch and an equally sized target batch. Target rows contribute only through the
//! MMD term.

use serde::{Deserialize, Serialize};

use super::mmd::{median_heuristic, MmdEstimator};
use crate::error::{Error, Result};
use crate::neural::train::{head_inputs, train_network, MmdTerm, TrainOptions};
use crate::neural::{standardize_targets_with, Activation, DenseLayer, LstmArtifact, Network, SeqData};
use crate::rng::{domain, substream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdaptMode {
    /// Freeze the whole pretrained network except its output layer, drop that output
    /// and append two new ReLU layers plus a new linear output.
    #[default]
    Append,
    /// Freeze the LSTM layers and retrain the two pretrained dense layers and output.
    Unfreeze,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DaConfig {
    pub lambda: f64,
    pub mode: AdaptMode,
    /// First and last adapted dense layer (0-based dense numbering); `None` picks the
    /// two layers that are trained in `mode`.
    pub layers: Option<(usize, usize)>,
    /// MMD kernel width; `None` uses the median heuristic per layer at the start.
    pub gamma: Option<f64>,
    pub estimator: MmdEstimator,
    /// Width of appended layers; `None` keeps the pretrained dense width.
    pub adapt_size: Option<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub backoff: bool,
}

impl Default for DaConfig {
    fn default() -> Self {
        DaConfig {
            lambda: 1.0,
            mode: AdaptMode::Append,
            layers: None,
            gamma: None,
            estimator: MmdEstimator::Biased,
            adapt_size: None,
            epochs: 50,
            learning_rate: 0.0009,
            batch_size: 32,
            backoff: false,
        }
    }
}

impl DaConfig {
    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            backoff: self.backoff,
            ..TrainOptions::default()
        }
    }
}

/// The network fine-tuning starts from, its freeze mask and the adapted layer range.
pub fn adapted_network(pre: &LstmArtifact, cfg: &DaConfig, seed: u64) -> Result<(Network, Vec<bool>, (usize, usize))> {
    let base = &pre.network;
    if base.dense.len() < 3 {
        return Err(Error::Config("pretrained network needs two dense layers and an output".into()));
    }
    let n_lstm = base.lstm.len();
    let mut net = base.clone();
    let (frozen, default_layers) = match cfg.mode {
        AdaptMode::Append => {
            let keep = base.dense.len() - 1;
            net.dense.truncate(keep);
            let width = net.dense[keep - 1].output;
            let a = cfg.adapt_size.unwrap_or(width);
            let mut rng = substream(seed, domain::DA_INIT, 0, 0, 0);
            net.dense.push(DenseLayer::init(width, a, Activation::Relu, &mut rng));
            net.dense.push(DenseLayer::init(a, a, Activation::Relu, &mut rng));
            net.dense.push(DenseLayer::init(a, 1, Activation::Linear, &mut rng));
            let frozen = (0..net.layer_count()).map(|l| l < n_lstm + keep).collect();
            (frozen, (keep, keep + 1))
        }
        AdaptMode::Unfreeze => {
            let first = base.dense.len() - 3;
            let frozen = (0..net.layer_count()).map(|l| l < n_lstm + first).collect();
            (frozen, (first, first + 1))
        }
    };
    let layers = cfg.layers.unwrap_or(default_layers);
    let first_trainable = default_layers.0;
    if layers.0 > layers.1 || layers.0 < first_trainable || layers.1 >= net.dense.len() {
        return Err(Error::Config(format!(
            "adapted layers {}..{} must be trainable dense layers",
            layers.0, layers.1
        )));
    }
    Ok((net, frozen, layers))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DaResult {
    pub artifact: LstmArtifact,
    pub gammas: Vec<f64>,
    pub layers: (usize, usize),
}

/// Fine-tunes `pre` on labelled source windows and unlabelled target windows.
pub fn da_finetune(
    pre: &LstmArtifact,
    source: &SeqData,
    y_source: &[f64],
    target: &SeqData,
    cfg: &DaConfig,
    seed: u64,
) -> Result<DaResult> {
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
        return Err(Error::Config("lambda must be non-negative".into()));
    }
    for d in [source, target] {
        if let Some(r) = d.rows.first() {
            if r.len() != pre.network.input {
                return Err(Error::DimensionMismatch {
                    expected: pre.network.input,
                    got: r.len(),
                });
            }
        }
    }
    if cfg.lambda > 0.0 && target.is_empty() {
        return Err(Error::Data("empty target set".into()));
    }
    let (net, frozen, layers) = adapted_network(pre, cfg, seed)?;
    let ys = standardize_targets_with(y_source, pre.y_mean, pre.y_std);
    let first = frozen.iter().position(|f| !f).unwrap_or(0) - net.lstm.len();

    let gammas: Vec<f64> = match cfg.gamma {
        Some(g) => vec![g; layers.1 - layers.0 + 1],
        None if cfg.lambda > 0.0 => {
            let src = head_inputs(&net, source, first)?;
            let tgt = head_inputs(&net, target, first)?;
            (layers.0..=layers.1)
                .map(|l| {
                    let pooled: Vec<Vec<f64>> = src
                        .iter()
                        .chain(&tgt)
                        .map(|x| net.head_features(first, l + 1, x))
                        .collect();
                    median_heuristic(&pooled, 500)
                })
                .collect()
        }
        None => Vec::new(),
    };
    let term = MmdTerm {
        target,
        lambda: cfg.lambda,
        layers: layers.0..=layers.1,
        gammas: gammas.clone(),
        estimator: cfg.estimator,
    };
    let mmd = (cfg.lambda > 0.0).then_some(&term);
    let (network, log) = train_network(net, source, &ys, &cfg.train_options(), &frozen, seed, mmd)?;
    let mut artifact = pre.clone();
    artifact.network = network;
    artifact.frozen = frozen;
    artifact.log = log;
    artifact.seed = seed;
    Ok(DaResult {
        artifact,
        gammas,
        layers,
    })
}
