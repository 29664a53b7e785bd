//! Mini-batch training shared by plain fitting and domain-adaptive fine-tuning.
//!
//! Adam update per trainable parameter, with gradient `g` at step `t`:
//!
//! ```text
//! m ← β1 m + (1-β1) g        v ← β2 v + (1-β2) g²
//! p ← p - lr · √(1-β2ᵗ)/(1-β1ᵗ) · m / (√v + ε)
//! ```
//!
//! When every LSTM layer is frozen the trunk runs once per sample in inference mode
//! (no dropout) and only the dense head is trained on the cached trunk outputs.

use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::{Grads, HeadTrace, Network};
use super::SeqData;
use crate::error::{Error, Result};
use crate::rng::{domain, substream};
use crate::transfer::mmd::{mmd2_with_grad, MmdEstimator};

/// Samples per parallel work unit; fixed so results do not depend on thread count.
const CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Revert an epoch and halve the learning rate when the full training loss rises.
    pub backoff: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 300,
            batch_size: 32,
            learning_rate: 0.0009,
            backoff: true,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Training MSE in inference mode after the epoch (standardized target units).
    pub loss: f64,
    /// Mean per-batch MMD penalty, before multiplying by λ.
    pub mmd: f64,
    pub learning_rate: f64,
    pub reverted: bool,
}

/// MMD penalty between source and target activations of dense layers `layers`.
pub struct MmdTerm<'a> {
    pub target: &'a SeqData<'a>,
    pub lambda: f64,
    pub layers: RangeInclusive<usize>,
    /// Kernel width per layer in `layers`.
    pub gammas: Vec<f64>,
    pub estimator: MmdEstimator,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(net: &Network) -> Self {
        let z: Vec<Vec<f64>> = net.layer_params().iter().map(|p| vec![0.0; p.len()]).collect();
        Adam {
            m: z.clone(),
            v: z,
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Network, g: &Grads, trainable: &[bool], lr: f64, o: &TrainOptions) {
        self.t += 1;
        let scale = lr * (1.0 - o.beta2.powi(self.t)).sqrt() / (1.0 - o.beta1.powi(self.t));
        for (l, params) in net.layer_params_mut().into_iter().enumerate() {
            if !trainable[l] {
                continue;
            }
            let (m, v) = (&mut self.m[l], &mut self.v[l]);
            for (k, p) in params.iter_mut().enumerate() {
                let gk = g.layers[l][k];
                m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * gk;
                v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * gk * gk;
                *p -= scale * m[k] / (v[k].sqrt() + o.adam_eps);
            }
        }
    }
}

impl Clone for Adam {
    fn clone(&self) -> Self {
        Adam {
            m: self.m.clone(),
            v: self.v.clone(),
            t: self.t,
        }
    }
}

/// Where gradient flow starts.
enum Mode {
    /// Nothing trainable.
    Frozen,
    /// Full network, dropout active during training.
    Full { stop: usize },
    /// Dense layers from `first` on, fed by cached inputs.
    Head { first: usize },
}

fn mode_of(net: &Network, trainable: &[bool]) -> Mode {
    match trainable.iter().position(|t| *t) {
        None => Mode::Frozen,
        Some(l) if l < net.lstm.len() => Mode::Full { stop: l },
        Some(l) => Mode::Head {
            first: l - net.lstm.len(),
        },
    }
}

/// Inputs to dense layer `first` for every sample, in inference mode.
pub fn head_inputs(net: &Network, data: &SeqData, first: usize) -> Result<Vec<Vec<f64>>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| Ok(net.head_features(0, first, &net.trunk(data.seq(i))?)))
        .collect()
}

fn inference_loss(net: &Network, data: &SeqData, cached: Option<(&[Vec<f64>], usize)>, y: &[f64]) -> Result<f64> {
    let preds: Vec<f64> = match cached {
        Some((feats, first)) => feats.par_iter().map(|f| net.head_forward(first, f).prediction()).collect(),
        None => (0..data.len())
            .into_par_iter()
            .map(|i| net.predict(data.seq(i)))
            .collect::<Result<_>>()?,
    };
    Ok(preds.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64)
}

/// Trains the layers not marked frozen; returns the network and a per-epoch log.
pub fn train_network(
    mut net: Network,
    data: &SeqData,
    y: &[f64],
    opts: &TrainOptions,
    frozen: &[bool],
    seed: u64,
    mmd: Option<&MmdTerm>,
) -> Result<(Network, Vec<EpochRecord>)> {
    if data.is_empty() {
        return Err(Error::Data("no training sequences".into()));
    }
    if y.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: y.len(),
        });
    }
    if frozen.len() != net.layer_count() {
        return Err(Error::Config(format!(
            "freeze mask has {} entries for {} layers",
            frozen.len(),
            net.layer_count()
        )));
    }
    if opts.batch_size == 0 || !(opts.learning_rate > 0.0) {
        return Err(Error::Config("batch size and learning rate must be positive".into()));
    }
    let trainable: Vec<bool> = frozen.iter().map(|f| !f).collect();
    let mode = mode_of(&net, &trainable);
    let n_lstm = net.lstm.len();

    let cached = match mode {
        Mode::Head { first } => Some(head_inputs(&net, data, first)?),
        _ => None,
    };
    let (first_dense, stop) = match mode {
        Mode::Head { first } => (first, n_lstm + first),
        Mode::Full { stop } => (0, stop),
        Mode::Frozen => (0, net.layer_count()),
    };
    let target = match mmd {
        Some(term) if term.lambda > 0.0 => {
            let Mode::Head { first } = mode else {
                return Err(Error::Config("mmd fine-tuning needs a frozen LSTM trunk".into()));
            };
            if *term.layers.start() < first || *term.layers.end() >= net.dense.len() {
                return Err(Error::Config("mmd layers must lie within the trainable head".into()));
            }
            if term.gammas.len() != term.layers.clone().count() {
                return Err(Error::Config("one mmd kernel width per adapted layer".into()));
            }
            if term.target.is_empty() {
                return Err(Error::Data("mmd fine-tuning needs target samples".into()));
            }
            let feats = head_inputs(&net, term.target, first)?;
            let mut order: Vec<usize> = (0..feats.len()).collect();
            order.shuffle(&mut substream(seed, domain::DA_TARGET, 0, 0, 0));
            Some((term, feats, order))
        }
        _ => None,
    };

    let cached_ref = cached.as_deref().map(|c| (c, first_dense));
    let mut loss = inference_loss(&net, data, cached_ref, y)?;
    let mut log = Vec::with_capacity(opts.epochs);
    if matches!(mode, Mode::Frozen) {
        for epoch in 1..=opts.epochs {
            log.push(EpochRecord {
                epoch,
                loss,
                mmd: 0.0,
                learning_rate: opts.learning_rate,
                reverted: false,
            });
        }
        return Ok((net, log));
    }

    let mut adam = Adam::new(&net);
    let mut lr = opts.learning_rate;
    let mut cursor = 0usize;
    let n = data.len();
    for epoch in 1..=opts.epochs {
        let snapshot = opts.backoff.then(|| (net.clone(), adam.clone()));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut substream(seed, domain::LSTM_SHUFFLE, epoch as u64, 0, 0));
        let mut mmd_sum = 0.0;
        let mut batches = 0usize;
        for (b, batch) in order.chunks(opts.batch_size).enumerate() {
            let bs = batch.len() as f64;
            let grads = match (&cached, &target) {
                (Some(feats), target) => {
                    let traces: Vec<HeadTrace> = batch
                        .par_iter()
                        .map(|&i| net.head_forward(first_dense, &feats[i]))
                        .collect();
                    let mut inject_src: Vec<Vec<Option<Vec<f64>>>> = vec![Vec::new(); batch.len()];
                    let mut extra: Option<(Vec<HeadTrace>, Vec<Vec<Option<Vec<f64>>>>)> = None;
                    if let Some((term, tfeats, torder)) = target {
                        let tidx: Vec<usize> = (0..batch.len())
                            .map(|k| torder[(cursor + k) % torder.len()])
                            .collect();
                        cursor = (cursor + batch.len()) % torder.len();
                        let ttraces: Vec<HeadTrace> = tidx
                            .par_iter()
                            .map(|&i| net.head_forward(first_dense, &tfeats[i]))
                            .collect();
                        let span = term.layers.end() - first_dense + 1;
                        for v in inject_src.iter_mut() {
                            *v = vec![None; span];
                        }
                        let mut inject_tgt = vec![vec![None; span]; tidx.len()];
                        for (li, layer) in term.layers.clone().enumerate() {
                            let a: Vec<Vec<f64>> = traces.iter().map(|t| t.output_of(layer).to_vec()).collect();
                            let bt: Vec<Vec<f64>> = ttraces.iter().map(|t| t.output_of(layer).to_vec()).collect();
                            let (val, ga, gb) = mmd2_with_grad(&a, &bt, term.gammas[li], term.estimator)?;
                            mmd_sum += val;
                            let slot = layer - first_dense;
                            for (k, g) in ga.into_iter().enumerate() {
                                inject_src[k][slot] = Some(g.iter().map(|v| v * term.lambda).collect());
                            }
                            for (k, g) in gb.into_iter().enumerate() {
                                inject_tgt[k][slot] = Some(g.iter().map(|v| v * term.lambda).collect());
                            }
                        }
                        extra = Some((ttraces, inject_tgt));
                    }
                    let src = accumulate(&net, batch.len(), |k, g| {
                        let t = &traces[k];
                        let d = 2.0 * (t.prediction() - y[batch[k]]) / bs;
                        let inj: Vec<Option<&[f64]>> = inject_src[k].iter().map(|o| o.as_deref()).collect();
                        net.head_backward(t, d, &inj, stop, g);
                    });
                    match extra {
                        Some((ttraces, inject_tgt)) => {
                            let mut g = src;
                            g.add(&accumulate(&net, ttraces.len(), |k, g| {
                                let inj: Vec<Option<&[f64]>> = inject_tgt[k].iter().map(|o| o.as_deref()).collect();
                                net.head_backward(&ttraces[k], 0.0, &inj, stop, g);
                            }));
                            g
                        }
                        None => src,
                    }
                }
                (None, _) => {
                    let mut rng = substream(seed, domain::LSTM_DROPOUT, epoch as u64, b as u64, 0);
                    let masks: Vec<Option<Vec<f64>>> = batch.iter().map(|_| net.dropout_mask(&mut rng)).collect();
                    let traces = batch
                        .par_iter()
                        .zip(&masks)
                        .map(|(&i, m)| net.forward(data.seq(i), m.as_deref()))
                        .collect::<Result<Vec<_>>>()?;
                    accumulate(&net, batch.len(), |k, g| {
                        let t = &traces[k];
                        let d = 2.0 * (t.head.prediction() - y[batch[k]]) / bs;
                        net.backward(t, d, &[], stop, g);
                    })
                }
            };
            batches += 1;
            adam.step(&mut net, &grads, &trainable, lr, opts);
        }
        let new_loss = inference_loss(&net, data, cached.as_deref().map(|c| (c, first_dense)), y)?;
        if !new_loss.is_finite() || !net.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let mmd_mean = if batches > 0 && target.is_some() {
            mmd_sum / batches as f64
        } else {
            0.0
        };
        let mut reverted = false;
        if let Some((old_net, old_adam)) = snapshot.filter(|_| new_loss > loss) {
            net = old_net;
            adam = old_adam;
            lr /= 2.0;
            reverted = true;
        } else {
            loss = new_loss;
        }
        log.push(EpochRecord {
            epoch,
            loss,
            mmd: mmd_mean,
            learning_rate: lr,
            reverted,
        });
    }
    Ok((net, log))
}

/// Sums per-sample gradients over fixed-size chunks, chunks combined in order.
fn accumulate<F>(net: &Network, n: usize, f: F) -> Grads
where
    F: Fn(usize, &mut Grads) + Sync,
{
    let chunks: Vec<Grads> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut g = Grads::zeros_like(net);
            for k in c * CHUNK..((c + 1) * CHUNK).min(n) {
                f(k, &mut g);
            }
            g
        })
        .collect();
    let mut total = Grads::zeros_like(net);
    for g in &chunks {
        total.add(g);
    }
    total
}
