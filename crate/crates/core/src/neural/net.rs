//! LSTM stack followed by a dense head, with hand-written backpropagation through time.
//!
//! Layers are numbered LSTM layers first, then dense layers. Each layer keeps its
//! parameters in one flat vector (weights row-major, then biases) so optimizers,
//! freezing and finite-difference checks can treat every layer the same way.
//!
//! LSTM cell, gates stacked `[i; f; g; o]`, `z = W [x_t; h_{t-1}] + b`:
//!
//! ```text
//! i = σ(z_i)  f = σ(z_f)  g = tanh(z_g)  o = σ(z_o)
//! c_t = f ⊙ c_{t-1} + i ⊙ g      h_t = o ⊙ tanh(c_t)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub input: usize,
    pub hidden: usize,
    /// `4H × (input + H)` weights followed by `4H` biases.
    pub params: Vec<f64>,
}

impl LstmLayer {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmLayer {
            input,
            hidden,
            params: vec![0.0; 4 * hidden * (input + hidden) + 4 * hidden],
        }
    }

    fn cols(&self) -> usize {
        self.input + self.hidden
    }

    fn bias_offset(&self) -> usize {
        4 * self.hidden * self.cols()
    }

    /// Uniform `±1/√(input + H)` weights, zero biases except the forget gate at 1.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut l = Self::zeros(input, hidden);
        let bound = 1.0 / (l.cols() as f64).sqrt();
        let off = l.bias_offset();
        for p in &mut l.params[..off] {
            *p = rng.random_range(-bound..bound);
        }
        for p in &mut l.params[off + hidden..off + 2 * hidden] {
            *p = 1.0;
        }
        l
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
    /// `output × input` weights followed by `output` biases.
    pub params: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        DenseLayer {
            input,
            output,
            activation,
            params: vec![0.0; output * input + output],
        }
    }

    pub fn init<R: Rng>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let mut l = Self::zeros(input, output, activation);
        let bound = 1.0 / (input as f64).sqrt();
        for p in &mut l.params[..output * input] {
            *p = rng.random_range(-bound..bound);
        }
        l
    }

    fn apply(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (w, b) = self.params.split_at(self.output * self.input);
        let pre: Vec<f64> = (0..self.output)
            .map(|r| b[r] + dot(&w[r * self.input..(r + 1) * self.input], x))
            .collect();
        let out = match self.activation {
            Activation::Relu => pre.iter().map(|v| v.max(0.0)).collect(),
            Activation::Linear => pre.clone(),
        };
        (pre, out)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input: usize,
    pub lstm: Vec<LstmLayer>,
    /// Dropout rate on the last LSTM output, active only in training.
    pub dropout: f64,
    pub dense: Vec<DenseLayer>,
}

/// Activations of one LSTM layer over the window.
#[derive(Clone, Debug, Default)]
struct LstmTrace {
    /// `[x_t; h_{t-1}]` per step.
    xh: Vec<Vec<f64>>,
    /// Activated gates `[i; f; g; o]` per step.
    gates: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    tanh_c: Vec<Vec<f64>>,
}

/// Dense-head activations: `inputs[k]` feeds dense layer `first + k`.
#[derive(Clone, Debug, Default)]
pub struct HeadTrace {
    pub first: usize,
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    /// Post-activation output of each dense layer.
    pub outputs: Vec<Vec<f64>>,
}

impl HeadTrace {
    pub fn prediction(&self) -> f64 {
        self.outputs.last().map_or(0.0, |o| o[0])
    }

    /// Output of dense layer `index` (absolute dense numbering).
    pub fn output_of(&self, index: usize) -> &[f64] {
        &self.outputs[index - self.first]
    }
}

#[derive(Clone, Debug, Default)]
pub struct Trace {
    lstm: Vec<LstmTrace>,
    mask: Option<Vec<f64>>,
    pub head: HeadTrace,
}

/// Gradients laid out like the network's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub layers: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(net: &Network) -> Self {
        Grads {
            layers: net.layer_params().iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

impl Network {
    pub fn layer_count(&self) -> usize {
        self.lstm.len() + self.dense.len()
    }

    pub fn layer_params(&self) -> Vec<&[f64]> {
        self.lstm
            .iter()
            .map(|l| l.params.as_slice())
            .chain(self.dense.iter().map(|l| l.params.as_slice()))
            .collect()
    }

    pub fn layer_params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.lstm
            .iter_mut()
            .map(|l| &mut l.params)
            .chain(self.dense.iter_mut().map(|l| &mut l.params))
            .collect()
    }

    pub fn layer_names(&self) -> Vec<String> {
        (1..=self.lstm.len())
            .map(|i| format!("lstm{i}"))
            .chain((1..=self.dense.len()).map(|i| format!("dense{i}")))
            .collect()
    }

    /// Width of the vector entering the dense head.
    pub fn trunk_width(&self) -> usize {
        self.lstm.last().map_or(self.input, |l| l.hidden)
    }

    /// Width of the input to dense layer `k`.
    pub fn dense_input_width(&self, k: usize) -> usize {
        self.dense.get(k).map_or(0, |l| l.input)
    }

    pub fn param_count(&self) -> usize {
        self.layer_params().iter().map(|p| p.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layer_params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Draws an inverted-dropout mask for the trunk output.
    pub fn dropout_mask<R: Rng>(&self, rng: &mut R) -> Option<Vec<f64>> {
        if self.dropout <= 0.0 {
            return None;
        }
        let keep = 1.0 - self.dropout;
        Some(
            (0..self.trunk_width())
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect(),
        )
    }

    fn check_seq(&self, seq: &[Vec<f64>]) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::Data("empty input sequence".into()));
        }
        match seq.iter().find(|r| r.len() != self.input) {
            Some(r) => Err(Error::DimensionMismatch {
                expected: self.input,
                got: r.len(),
            }),
            None => Ok(()),
        }
    }

    /// Runs the LSTM stack; returns the last hidden state of the top layer.
    fn run_lstm(&self, seq: &[Vec<f64>], keep: bool) -> (Vec<f64>, Vec<LstmTrace>) {
        let mut xs: Vec<Vec<f64>> = seq.to_vec();
        let mut traces = Vec::new();
        for layer in &self.lstm {
            let h_n = layer.hidden;
            let cols = layer.cols();
            let (w, b) = layer.params.split_at(layer.bias_offset());
            let mut h = vec![0.0; h_n];
            let mut c = vec![0.0; h_n];
            let mut tr = LstmTrace::default();
            let mut outs = Vec::with_capacity(xs.len());
            for x in &xs {
                let mut xh = Vec::with_capacity(cols);
                xh.extend_from_slice(x);
                xh.extend_from_slice(&h);
                let mut gates = vec![0.0; 4 * h_n];
                for (r, g) in gates.iter_mut().enumerate() {
                    let z = b[r] + dot(&w[r * cols..(r + 1) * cols], &xh);
                    *g = if (2 * h_n..3 * h_n).contains(&r) { z.tanh() } else { sigmoid(z) };
                }
                let mut tc = vec![0.0; h_n];
                for j in 0..h_n {
                    c[j] = gates[h_n + j] * c[j] + gates[j] * gates[2 * h_n + j];
                    tc[j] = c[j].tanh();
                    h[j] = gates[3 * h_n + j] * tc[j];
                }
                outs.push(h.clone());
                if keep {
                    tr.xh.push(xh);
                    tr.gates.push(gates);
                    tr.c.push(c.clone());
                    tr.tanh_c.push(tc);
                }
            }
            traces.push(tr);
            xs = outs;
        }
        (xs.pop().unwrap_or_default(), traces)
    }

    /// Trunk output (LSTM stack, no dropout) for a sequence.
    pub fn trunk(&self, seq: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_seq(seq)?;
        Ok(self.run_lstm(seq, false).0)
    }

    /// Runs dense layers `first..` on `input`.
    pub fn head_forward(&self, first: usize, input: &[f64]) -> HeadTrace {
        let mut tr = HeadTrace {
            first,
            ..HeadTrace::default()
        };
        let mut x = input.to_vec();
        for layer in &self.dense[first..] {
            let (pre, out) = layer.apply(&x);
            tr.inputs.push(x);
            tr.pre.push(pre);
            tr.outputs.push(out.clone());
            x = out;
        }
        tr
    }

    /// Output of dense layers `first..last` applied to `input`, in inference mode.
    pub fn head_features(&self, first: usize, last: usize, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        for layer in &self.dense[first..last] {
            x = layer.apply(&x).1;
        }
        x
    }

    /// Full forward pass; `mask` is the dropout mask (training) or `None` (inference).
    pub fn forward(&self, seq: &[Vec<f64>], mask: Option<&[f64]>) -> Result<Trace> {
        self.check_seq(seq)?;
        let (mut top, lstm) = self.run_lstm(seq, true);
        if let Some(m) = mask {
            top.iter_mut().zip(m).for_each(|(v, s)| *v *= s);
        }
        let head = self.head_forward(0, &top);
        Ok(Trace {
            lstm,
            mask: mask.map(<[f64]>::to_vec),
            head,
        })
    }

    /// Inference-mode prediction; fails naming the first layer with a non-finite value.
    pub fn predict(&self, seq: &[Vec<f64>]) -> Result<f64> {
        self.check_seq(seq)?;
        let (top, _) = self.run_lstm(seq, false);
        if top.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer: format!("lstm{}", self.lstm.len()),
            });
        }
        let mut x = top;
        for (k, layer) in self.dense.iter().enumerate() {
            let (pre, out) = layer.apply(&x);
            x = out;
            if pre.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    layer: format!("dense{}", k + 1),
                });
            }
        }
        Ok(x[0])
    }

    /// Backpropagates through the dense head.
    ///
    /// `d_out` is the loss gradient at the network output; `inject[k]`, when present,
    /// is added to the gradient at the post-activation output of dense layer
    /// `trace.first + k`. Layers below `stop` (absolute numbering) get no gradient.
    /// Returns the gradient at the head input.
    pub fn head_backward(
        &self,
        trace: &HeadTrace,
        d_out: f64,
        inject: &[Option<&[f64]>],
        stop: usize,
        grads: &mut Grads,
    ) -> Vec<f64> {
        let n_lstm = self.lstm.len();
        let last = self.dense.len() - 1;
        let mut g: Vec<f64> = vec![0.0; self.dense[last].output];
        g[0] = d_out;
        for k in (trace.first..self.dense.len()).rev() {
            let local = k - trace.first;
            if let Some(Some(extra)) = inject.get(local) {
                g.iter_mut().zip(extra.iter()).for_each(|(a, b)| *a += b);
            }
            let layer = &self.dense[k];
            if layer.activation == Activation::Relu {
                for (gv, p) in g.iter_mut().zip(&trace.pre[local]) {
                    if *p <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let x = &trace.inputs[local];
            let idx = n_lstm + k;
            if idx >= stop {
                let gl = &mut grads.layers[idx];
                let nw = layer.output * layer.input;
                for r in 0..layer.output {
                    if g[r] == 0.0 {
                        continue;
                    }
                    let row = &mut gl[r * layer.input..(r + 1) * layer.input];
                    row.iter_mut().zip(x).for_each(|(a, xv)| *a += g[r] * xv);
                    gl[nw + r] += g[r];
                }
            }
            if idx <= stop {
                return Vec::new();
            }
            let mut gx = vec![0.0; layer.input];
            let w = &layer.params[..layer.output * layer.input];
            for r in 0..layer.output {
                if g[r] == 0.0 {
                    continue;
                }
                gx.iter_mut()
                    .zip(&w[r * layer.input..(r + 1) * layer.input])
                    .for_each(|(a, wv)| *a += g[r] * wv);
            }
            g = gx;
        }
        g
    }

    /// Full backward pass for one sample; accumulates into `grads`.
    pub fn backward(&self, trace: &Trace, d_out: f64, inject: &[Option<&[f64]>], stop: usize, grads: &mut Grads) {
        let n_lstm = self.lstm.len();
        let mut g = self.head_backward(&trace.head, d_out, inject, stop, grads);
        if stop >= n_lstm || g.is_empty() {
            return;
        }
        if let Some(m) = &trace.mask {
            g.iter_mut().zip(m).for_each(|(a, s)| *a *= s);
        }
        // Gradient w.r.t. each step's output of the layer above; only the last step
        // of the top layer receives the head gradient.
        let steps = trace.lstm[0].xh.len();
        let mut dh_seq: Vec<Vec<f64>> = vec![vec![0.0; g.len()]; steps];
        dh_seq[steps - 1] = g;
        for li in (0..n_lstm).rev() {
            let layer = &self.lstm[li];
            let tr = &trace.lstm[li];
            let h_n = layer.hidden;
            let cols = layer.cols();
            let boff = layer.bias_offset();
            let w = &layer.params[..boff];
            let need_input = li > stop;
            let mut dx_seq = vec![vec![0.0; layer.input]; if need_input { steps } else { 0 }];
            let mut dh_next = vec![0.0; h_n];
            let mut dc_next = vec![0.0; h_n];
            let mut dz = vec![0.0; 4 * h_n];
            for t in (0..steps).rev() {
                let gates = &tr.gates[t];
                let c_prev = if t > 0 { Some(&tr.c[t - 1]) } else { None };
                for j in 0..h_n {
                    let (i, f, gg, o) = (gates[j], gates[h_n + j], gates[2 * h_n + j], gates[3 * h_n + j]);
                    let tc = tr.tanh_c[t][j];
                    let dh = dh_seq[t][j] + dh_next[j];
                    let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
                    let cp = c_prev.map_or(0.0, |c| c[j]);
                    dz[j] = dc * gg * i * (1.0 - i);
                    dz[h_n + j] = dc * cp * f * (1.0 - f);
                    dz[2 * h_n + j] = dc * i * (1.0 - gg * gg);
                    dz[3 * h_n + j] = dh * tc * o * (1.0 - o);
                    dc_next[j] = dc * f;
                }
                let xh = &tr.xh[t];
                if li >= stop {
                    let gl = &mut grads.layers[li];
                    for r in 0..4 * h_n {
                        let d = dz[r];
                        if d == 0.0 {
                            continue;
                        }
                        gl[r * cols..(r + 1) * cols]
                            .iter_mut()
                            .zip(xh)
                            .for_each(|(a, x)| *a += d * x);
                        gl[boff + r] += d;
                    }
                }
                let mut dxh = vec![0.0; cols];
                for r in 0..4 * h_n {
                    let d = dz[r];
                    if d == 0.0 {
                        continue;
                    }
                    dxh.iter_mut()
                        .zip(&w[r * cols..(r + 1) * cols])
                        .for_each(|(a, wv)| *a += d * wv);
                }
                dh_next.copy_from_slice(&dxh[layer.input..]);
                if need_input {
                    dx_seq[t].copy_from_slice(&dxh[..layer.input]);
                }
            }
            if !need_input {
                return;
            }
            dh_seq = dx_seq;
        }
    }
}
