//! LSTM regression on windows of consecutive feature rows.
//!
//! A sample is `window` consecutive 15-minute rows of one road; the label is the flow
//! at the last row. Targets are standardized internally and mapped back on predict.

pub mod net;
pub mod train;

use std::io::Write;
use std::path::Path;

use chrono::Duration;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{interval, Timestamp};
use crate::error::{Error, Result};
use crate::features::Scaler;
use crate::rng::{domain, substream};
pub use net::{Activation, DenseLayer, LstmLayer, Network};
pub use train::{train_network, EpochRecord, TrainOptions};

pub const LSTM_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmNetConfig {
    pub hidden_size: usize,
    /// Width of the two fully-connected layers; `None` uses `hidden_size`.
    pub dense_size: Option<usize>,
    pub window: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub backoff: bool,
}

impl Default for LstmNetConfig {
    fn default() -> Self {
        LstmNetConfig {
            hidden_size: 100,
            dense_size: None,
            window: 5,
            dropout_rate: 0.2,
            learning_rate: 0.0009,
            epochs: 300,
            batch_size: 32,
            backoff: true,
        }
    }
}

impl LstmNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.hidden_size == 0 || self.dense_size == Some(0) || self.batch_size == 0 {
            return Err(Error::Config("window, hidden size, dense size and batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            backoff: self.backoff,
            ..TrainOptions::default()
        }
    }

    /// Applies `key = value` overrides as used by hyperparameter grids.
    pub fn with_overrides(&self, h: &std::collections::BTreeMap<String, f64>) -> Result<Self> {
        let mut c = self.clone();
        for (k, v) in h {
            let count = || -> Result<usize> {
                if *v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::Config(format!("{k} must be a non-negative integer")));
                }
                Ok(*v as usize)
            };
            match k.as_str() {
                "hidden" | "hidden_size" => c.hidden_size = count()?,
                "dense" | "dense_size" => c.dense_size = Some(count()?),
                "window" => c.window = count()?,
                "dropout" | "dropout_rate" => c.dropout_rate = *v,
                "learning_rate" => c.learning_rate = *v,
                "epochs" => c.epochs = count()?,
                "batch_size" => c.batch_size = count()?,
                other => return Err(Error::Config(format!("unknown lstm hyperparameter {other:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Two LSTM layers, two ReLU layers and a linear output, seeded.
    pub fn build(&self, input: usize, seed: u64) -> Network {
        let mut rng = substream(seed, domain::LSTM_INIT, 0, 0, 0);
        let h = self.hidden_size;
        let d = self.dense_size.unwrap_or(h);
        Network {
            input,
            lstm: vec![LstmLayer::init(input, h, &mut rng), LstmLayer::init(h, h, &mut rng)],
            dropout: self.dropout_rate,
            dense: vec![
                DenseLayer::init(h, d, Activation::Relu, &mut rng),
                DenseLayer::init(d, d, Activation::Relu, &mut rng),
                DenseLayer::init(d, 1, Activation::Linear, &mut rng),
            ],
        }
    }
}

/// Feature rows plus the last-row index of each window.
#[derive(Clone, Debug)]
pub struct SeqData<'a> {
    pub rows: &'a [Vec<f64>],
    pub window: usize,
    pub ends: Vec<usize>,
}

impl<'a> SeqData<'a> {
    pub fn new(rows: &'a [Vec<f64>], window: usize, ends: Vec<usize>) -> Self {
        SeqData { rows, window, ends }
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn seq(&self, i: usize) -> &'a [Vec<f64>] {
        let e = self.ends[i];
        &self.rows[e + 1 - self.window..=e]
    }

    /// Keeps windows whose last row satisfies `keep`.
    pub fn filter(&self, keep: impl Fn(usize) -> bool) -> Self {
        SeqData {
            rows: self.rows,
            window: self.window,
            ends: self.ends.iter().copied().filter(|e| keep(*e)).collect(),
        }
    }
}

/// Last-row indices of every window of `window` rows that stays on one road and
/// steps exactly one interval per row. Rows must be grouped by road in time order.
pub fn window_ends(road_ids: &[String], timestamps: &[Timestamp], window: usize) -> Result<Vec<usize>> {
    if window == 0 {
        return Err(Error::Config("window must be at least 1".into()));
    }
    if road_ids.len() != timestamps.len() {
        return Err(Error::DimensionMismatch {
            expected: road_ids.len(),
            got: timestamps.len(),
        });
    }
    let step: Duration = interval();
    let mut ends = Vec::new();
    let mut run = 0usize;
    for i in 0..road_ids.len() {
        let continues = i > 0 && road_ids[i] == road_ids[i - 1] && timestamps[i] - timestamps[i - 1] == step;
        run = if continues { run + 1 } else { 1 };
        if run >= window {
            ends.push(i);
        }
    }
    if ends.is_empty() && !road_ids.is_empty() {
        return Err(Error::Data(format!(
            "window {window} is longer than every contiguous run of rows"
        )));
    }
    Ok(ends)
}

/// A trained LSTM regressor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmArtifact {
    pub format_version: u32,
    pub config: LstmNetConfig,
    pub seed: u64,
    pub columns: Vec<String>,
    pub scaler: Option<Scaler>,
    pub y_mean: f64,
    pub y_std: f64,
    pub network: Network,
    /// Layers that were frozen during the last training run.
    pub frozen: Vec<bool>,
    pub log: Vec<EpochRecord>,
}

impl LstmArtifact {
    pub fn predict(&self, data: &SeqData) -> Result<Vec<f64>> {
        if data.rows.first().is_some_and(|r| r.len() != self.network.input) {
            return Err(Error::DimensionMismatch {
                expected: self.network.input,
                got: data.rows[0].len(),
            });
        }
        (0..data.len())
            .into_par_iter()
            .map(|i| Ok(self.network.predict(data.seq(i))? * self.y_std + self.y_mean))
            .collect()
    }

    pub fn with_columns(mut self, columns: Vec<String>, scaler: Option<Scaler>) -> Self {
        self.columns = columns;
        self.scaler = scaler;
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let a: LstmArtifact = serde_json::from_str(s)?;
        if a.format_version != LSTM_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported lstm format version {}", a.format_version)));
        }
        if !a.network.is_finite() {
            return Err(Error::NonFinite {
                layer: "stored parameters".into(),
            });
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

    /// Training log as CSV (`epoch,loss,mmd,learning_rate,reverted`), loss in target units².
    pub fn write_log(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = String::from("epoch,loss,mmd,learning_rate,reverted\n");
        let s2 = self.y_std * self.y_std;
        for r in &self.log {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch,
                r.loss * s2,
                r.mmd,
                r.learning_rate,
                r.reverted
            ));
        }
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn standardize_targets(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    (mean, if sd > 1e-12 { sd } else { 1.0 })
}

pub fn standardize_targets_with(y: &[f64], mean: f64, sd: f64) -> Vec<f64> {
    y.iter().map(|v| (v - mean) / sd).collect()
}

/// Fits an LSTM regressor from scratch. `frozen` marks layers (LSTM first, then dense)
/// that keep their initial parameters.
pub fn fit_lstm(
    data: &SeqData,
    y: &[f64],
    cfg: &LstmNetConfig,
    seed: u64,
    frozen: Option<&[bool]>,
) -> Result<LstmArtifact> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("no training windows".into()));
    }
    if data.window != cfg.window {
        return Err(Error::Config(format!(
            "windows built with length {} but config says {}",
            data.window, cfg.window
        )));
    }
    let input = data.rows[data.ends[0]].len();
    let net = cfg.build(input, seed);
    let frozen = frozen.map_or_else(|| vec![false; net.layer_count()], <[bool]>::to_vec);
    let (y_mean, y_std) = standardize_targets(y);
    let ys = standardize_targets_with(y, y_mean, y_std);
    let (network, log) = train_network(net, data, &ys, &cfg.train_options(), &frozen, seed, None)?;
    Ok(LstmArtifact {
        format_version: LSTM_FORMAT_VERSION,
        config: cfg.clone(),
        seed,
        columns: Vec::new(),
        scaler: None,
        y_mean,
        y_std,
        network,
        frozen,
        log,
    })
}
