//! Forward and backward kernels for the layer primitives.
//!
//! The forward functions are usable on their own; the tape in
//! [`crate::autodiff`] records them and calls the matching backward kernels.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SinetError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Linear => v,
        }
    }
}

fn expect_rank(t: &Tensor, rank: usize, what: &str) -> Result<()> {
    if t.rank() != rank {
        return Err(SinetError::Dimension(format!(
            "{what} must have rank {rank}, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// conv1d (same padding, cross-correlation)

pub(crate) fn check_conv1d(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<()> {
    expect_rank(input, 2, "conv1d input")?;
    expect_rank(kernels, 3, "conv1d kernels")?;
    expect_rank(bias, 1, "conv1d bias")?;
    let (t, cin) = (input.shape()[0], input.shape()[1]);
    let (k, kcin, cout) = (kernels.shape()[0], kernels.shape()[1], kernels.shape()[2]);
    if t == 0 {
        return Err(SinetError::Empty("conv1d input has no timesteps".into()));
    }
    if k % 2 == 0 {
        return Err(SinetError::Dimension(format!(
            "conv1d kernel size must be odd, got kernels {:?}",
            kernels.shape()
        )));
    }
    if kcin != cin || bias.shape()[0] != cout {
        return Err(SinetError::Dimension(format!(
            "conv1d shape mismatch: input {:?}, kernels {:?}, bias {:?}",
            input.shape(),
            kernels.shape(),
            bias.shape()
        )));
    }
    Ok(())
}

/// Same-padded 1-D cross-correlation: input `[T×Cin]`, kernels `[K×Cin×Cout]`,
/// bias `[Cout]` → `[T×Cout]`. `K` must be odd; `(K-1)/2` zeros pad each end.
pub fn conv1d_same(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    check_conv1d(input, kernels, bias)?;
    let (t_len, cin) = (input.shape()[0], input.shape()[1]);
    let (k_len, cout) = (kernels.shape()[0], kernels.shape()[2]);
    let pad = (k_len - 1) / 2;
    let x = input.data();
    let w = kernels.data();
    let mut out = Vec::with_capacity(t_len * cout);
    for _ in 0..t_len {
        out.extend_from_slice(bias.data());
    }
    for t in 0..t_len {
        let row = &mut out[t * cout..(t + 1) * cout];
        for k in 0..k_len {
            let Some(s) = (t + k).checked_sub(pad).filter(|&s| s < t_len) else {
                continue;
            };
            for ci in 0..cin {
                let xv = x[s * cin + ci];
                // one-hot inputs are mostly zero
                if xv == 0.0 {
                    continue;
                }
                let wrow = &w[(k * cin + ci) * cout..(k * cin + ci + 1) * cout];
                for (o, wv) in row.iter_mut().zip(wrow) {
                    *o += xv * wv;
                }
            }
        }
    }
    Tensor::new(vec![t_len, cout], out)
}

/// Returns `(d_input, d_kernels, d_bias)`. `d_input` is skipped when not needed.
pub(crate) fn conv1d_same_backward(
    input: &Tensor,
    kernels: &Tensor,
    d_out: &[f64],
    need_input: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let (t_len, cin) = (input.shape()[0], input.shape()[1]);
    let (k_len, cout) = (kernels.shape()[0], kernels.shape()[2]);
    let pad = (k_len - 1) / 2;
    let x = input.data();
    let w = kernels.data();
    let mut d_bias = vec![0.0; cout];
    let mut d_kernels = vec![0.0; kernels.len()];
    let mut d_input = need_input.then(|| vec![0.0; input.len()]);
    for t in 0..t_len {
        let g = &d_out[t * cout..(t + 1) * cout];
        d_bias.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        for k in 0..k_len {
            let Some(s) = (t + k).checked_sub(pad).filter(|&s| s < t_len) else {
                continue;
            };
            for ci in 0..cin {
                let base = (k * cin + ci) * cout;
                let xv = x[s * cin + ci];
                if xv != 0.0 {
                    let dk = &mut d_kernels[base..base + cout];
                    dk.iter_mut().zip(g).for_each(|(a, b)| *a += xv * b);
                }
                if let Some(dx) = d_input.as_mut() {
                    let wrow = &w[base..base + cout];
                    dx[s * cin + ci] += wrow.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }
    (d_input, d_kernels, d_bias)
}

// ---------------------------------------------------------------------------
// max pooling

/// Non-overlapping max pooling over time: `[T×C]` → `[⌊T/pool⌋×C]`.
/// The trailing `T mod pool` timesteps are dropped.
pub fn maxpool1d(input: &Tensor, pool_size: usize) -> Result<Tensor> {
    maxpool1d_with_argmax(input, pool_size).map(|(t, _)| t)
}

/// Also returns, per output element, the flat input index that won
/// (first occurrence on ties).
pub(crate) fn maxpool1d_with_argmax(
    input: &Tensor,
    pool_size: usize,
) -> Result<(Tensor, Vec<usize>)> {
    expect_rank(input, 2, "maxpool1d input")?;
    if pool_size == 0 {
        return Err(SinetError::Dimension("pool_size must be at least 1".into()));
    }
    let (t_len, c) = (input.shape()[0], input.shape()[1]);
    if t_len < pool_size {
        return Err(SinetError::Empty(format!(
            "maxpool1d: {t_len} timesteps cannot fill one window of {pool_size}"
        )));
    }
    let out_len = t_len / pool_size;
    let x = input.data();
    let mut out = Vec::with_capacity(out_len * c);
    let mut argmax = Vec::with_capacity(out_len * c);
    for w in 0..out_len {
        for ch in 0..c {
            let mut best = w * pool_size * c + ch;
            for p in 1..pool_size {
                let idx = (w * pool_size + p) * c + ch;
                if x[idx] > x[best] {
                    best = idx;
                }
            }
            out.push(x[best]);
            argmax.push(best);
        }
    }
    Ok((Tensor::new(vec![out_len, c], out)?, argmax))
}

// ---------------------------------------------------------------------------
// dense

pub(crate) fn check_dense(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<()> {
    expect_rank(input, 1, "dense input")?;
    expect_rank(weight, 2, "dense weight")?;
    expect_rank(bias, 1, "dense bias")?;
    if weight.shape()[0] != input.len() || weight.shape()[1] != bias.len() {
        return Err(SinetError::Dimension(format!(
            "dense shape mismatch: input {:?}, weight {:?}, bias {:?}",
            input.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    Ok(())
}

/// `activation(input · weight + bias)` with input `[n]`, weight `[n×m]`, bias `[m]`.
pub fn dense(input: &Tensor, weight: &Tensor, bias: &Tensor, activation: Activation) -> Result<Tensor> {
    check_dense(input, weight, bias)?;
    let m = bias.len();
    let mut out = bias.data().to_vec();
    for (i, &xv) in input.data().iter().enumerate() {
        let wrow = &weight.data()[i * m..(i + 1) * m];
        out.iter_mut().zip(wrow).for_each(|(o, w)| *o += xv * w);
    }
    out.iter_mut().for_each(|v| *v = activation.apply(*v));
    Ok(Tensor::vector(out))
}

pub(crate) fn dense_backward(
    input: &Tensor,
    weight: &Tensor,
    output: &Tensor,
    activation: Activation,
    d_out: &[f64],
    need_input: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let m = output.len();
    let d_pre: Vec<f64> = match activation {
        Activation::Linear => d_out.to_vec(),
        Activation::Relu => d_out
            .iter()
            .zip(output.data())
            .map(|(g, &y)| if y > 0.0 { *g } else { 0.0 })
            .collect(),
    };
    let mut d_weight = vec![0.0; weight.len()];
    for (i, &xv) in input.data().iter().enumerate() {
        d_weight[i * m..(i + 1) * m]
            .iter_mut()
            .zip(&d_pre)
            .for_each(|(a, g)| *a = xv * g);
    }
    let d_input = need_input.then(|| {
        (0..input.len())
            .map(|i| {
                weight.data()[i * m..(i + 1) * m]
                    .iter()
                    .zip(&d_pre)
                    .map(|(w, g)| w * g)
                    .sum()
            })
            .collect()
    });
    (d_input, d_weight, d_pre)
}

// ---------------------------------------------------------------------------
// LSTM

/// Weights of one LSTM layer.
///
/// Gate blocks are laid out along the `4·hidden` axis in the fixed order
/// input, forget, cell candidate, output. Serialized checkpoints keep this order.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `[input_dim × 4·hidden]`
    pub w: Tensor,
    /// `[hidden × 4·hidden]`
    pub u: Tensor,
    /// `[4·hidden]`
    pub b: Tensor,
}

impl LstmParams {
    pub fn new(w: Tensor, u: Tensor, b: Tensor) -> Result<Self> {
        check_lstm_weights(&w, &u, &b)?;
        Ok(Self { w, u, b })
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w: Tensor::zeros(&[input_dim, 4 * hidden_dim]),
            u: Tensor::zeros(&[hidden_dim, 4 * hidden_dim]),
            b: Tensor::zeros(&[4 * hidden_dim]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn hidden_dim(&self) -> usize {
        self.u.shape()[0]
    }
}

pub(crate) fn check_lstm_weights(w: &Tensor, u: &Tensor, b: &Tensor) -> Result<()> {
    expect_rank(w, 2, "lstm W")?;
    expect_rank(u, 2, "lstm U")?;
    expect_rank(b, 1, "lstm b")?;
    let h = u.shape()[0];
    if u.shape()[1] != 4 * h || w.shape()[1] != 4 * h || b.len() != 4 * h {
        return Err(SinetError::Dimension(format!(
            "lstm weight shapes inconsistent: W {:?}, U {:?}, b {:?}",
            w.shape(),
            u.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Per-timestep activations kept for backpropagation through time.
#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    /// `[T × 4h]` post-activation gates (i, f, g, o)
    gates: Vec<f64>,
    /// `[T × h]`
    cells: Vec<f64>,
    /// `[T × h]` tanh of the cell state
    tanh_cells: Vec<f64>,
    /// `[T × h]`
    hidden: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Runs one LSTM layer from zero initial state over `seq` (`[T×d]`).
///
/// Returns the full hidden sequence `[T×h]` when `return_sequence`, else `h_T` as `[h]`.
pub fn lstm_layer_forward(seq: &Tensor, params: &LstmParams, return_sequence: bool) -> Result<Tensor> {
    lstm_forward_cached(seq, &params.w, &params.u, &params.b, return_sequence).map(|(t, _)| t)
}

pub(crate) fn lstm_forward_cached(
    seq: &Tensor,
    w: &Tensor,
    u: &Tensor,
    b: &Tensor,
    return_sequence: bool,
) -> Result<(Tensor, LstmCache)> {
    check_lstm_weights(w, u, b)?;
    expect_rank(seq, 2, "lstm input")?;
    let (t_len, d) = (seq.shape()[0], seq.shape()[1]);
    if t_len == 0 {
        return Err(SinetError::Empty("lstm input sequence has no timesteps".into()));
    }
    if d != w.shape()[0] {
        return Err(SinetError::Dimension(format!(
            "lstm input {:?} does not match W {:?}",
            seq.shape(),
            w.shape()
        )));
    }
    let h = u.shape()[0];
    let g4 = 4 * h;
    let (x, wd, ud) = (seq.data(), w.data(), u.data());
    let mut cache = LstmCache {
        gates: vec![0.0; t_len * g4],
        cells: vec![0.0; t_len * h],
        tanh_cells: vec![0.0; t_len * h],
        hidden: vec![0.0; t_len * h],
    };
    let mut pre = vec![0.0; g4];
    for t in 0..t_len {
        pre.copy_from_slice(b.data());
        for (i, &xv) in x[t * d..(t + 1) * d].iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            pre.iter_mut()
                .zip(&wd[i * g4..(i + 1) * g4])
                .for_each(|(p, w)| *p += xv * w);
        }
        if t > 0 {
            let (before, _) = cache.hidden.split_at(t * h);
            let h_prev = &before[(t - 1) * h..];
            for (j, &hv) in h_prev.iter().enumerate() {
                pre.iter_mut()
                    .zip(&ud[j * g4..(j + 1) * g4])
                    .for_each(|(p, u)| *p += hv * u);
            }
        }
        let gates = &mut cache.gates[t * g4..(t + 1) * g4];
        for k in 0..h {
            gates[k] = sigmoid(pre[k]);
            gates[h + k] = sigmoid(pre[h + k]);
            gates[2 * h + k] = pre[2 * h + k].tanh();
            gates[3 * h + k] = sigmoid(pre[3 * h + k]);
        }
        for k in 0..h {
            let c_prev = if t > 0 { cache.cells[(t - 1) * h + k] } else { 0.0 };
            let c = gates[h + k] * c_prev + gates[k] * gates[2 * h + k];
            let tc = c.tanh();
            cache.cells[t * h + k] = c;
            cache.tanh_cells[t * h + k] = tc;
            cache.hidden[t * h + k] = gates[3 * h + k] * tc;
        }
    }
    let out = if return_sequence {
        Tensor::new(vec![t_len, h], cache.hidden.clone())?
    } else {
        Tensor::vector(cache.hidden[(t_len - 1) * h..].to_vec())
    };
    Ok((out, cache))
}

pub(crate) struct LstmGrads {
    pub d_seq: Option<Vec<f64>>,
    pub d_w: Vec<f64>,
    pub d_u: Vec<f64>,
    pub d_b: Vec<f64>,
}

/// Backpropagation through time. `d_out` is `[T×h]` or `[h]` matching the forward output.
pub(crate) fn lstm_backward(
    seq: &Tensor,
    w: &Tensor,
    u: &Tensor,
    cache: &LstmCache,
    return_sequence: bool,
    d_out: &[f64],
    need_input: bool,
) -> LstmGrads {
    let (t_len, d) = (seq.shape()[0], seq.shape()[1]);
    let h = u.shape()[0];
    let g4 = 4 * h;
    let (x, wd, ud) = (seq.data(), w.data(), u.data());
    let mut d_w = vec![0.0; w.len()];
    let mut d_u = vec![0.0; u.len()];
    let mut d_b = vec![0.0; g4];
    let mut d_seq = need_input.then(|| vec![0.0; seq.len()]);
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut da = vec![0.0; g4];
    for t in (0..t_len).rev() {
        let gates = &cache.gates[t * g4..(t + 1) * g4];
        let tanh_c = &cache.tanh_cells[t * h..(t + 1) * h];
        for k in 0..h {
            let mut dh = dh_next[k];
            if return_sequence {
                dh += d_out[t * h + k];
            } else if t == t_len - 1 {
                dh += d_out[k];
            }
            let (gi, gf, gg, go) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            let c_prev = if t > 0 { cache.cells[(t - 1) * h + k] } else { 0.0 };
            let d_o = dh * tanh_c[k];
            let dc = dc_next[k] + dh * go * (1.0 - tanh_c[k] * tanh_c[k]);
            da[k] = dc * gg * gi * (1.0 - gi);
            da[h + k] = dc * c_prev * gf * (1.0 - gf);
            da[2 * h + k] = dc * gi * (1.0 - gg * gg);
            da[3 * h + k] = d_o * go * (1.0 - go);
            dc_next[k] = dc * gf;
        }
        d_b.iter_mut().zip(&da).for_each(|(a, g)| *a += g);
        let x_t = &x[t * d..(t + 1) * d];
        for (i, &xv) in x_t.iter().enumerate() {
            if xv != 0.0 {
                d_w[i * g4..(i + 1) * g4]
                    .iter_mut()
                    .zip(&da)
                    .for_each(|(a, g)| *a += xv * g);
            }
        }
        if let Some(dx) = d_seq.as_mut() {
            for i in 0..d {
                dx[t * d + i] = wd[i * g4..(i + 1) * g4]
                    .iter()
                    .zip(&da)
                    .map(|(w, g)| w * g)
                    .sum();
            }
        }
        if t > 0 {
            let h_prev = &cache.hidden[(t - 1) * h..t * h];
            for (j, &hv) in h_prev.iter().enumerate() {
                d_u[j * g4..(j + 1) * g4]
                    .iter_mut()
                    .zip(&da)
                    .for_each(|(a, g)| *a += hv * g);
            }
            for j in 0..h {
                dh_next[j] = ud[j * g4..(j + 1) * g4]
                    .iter()
                    .zip(&da)
                    .map(|(u, g)| u * g)
                    .sum();
            }
        }
    }
    LstmGrads { d_seq, d_w, d_u, d_b }
}

// ---------------------------------------------------------------------------
// small vector ops

/// `a` followed by `b`; both must be vectors.
pub fn concat(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    expect_rank(a, 1, "concat lhs")?;
    expect_rank(b, 1, "concat rhs")?;
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Ok(Tensor::vector(data))
}

/// `(1/n) Σ (pred_i - target_i)²` as a scalar tensor.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    if pred.is_empty() {
        return Err(SinetError::Empty("mse over an empty batch".into()));
    }
    if pred.len() != target.len() {
        return Err(SinetError::Dimension(format!(
            "mse: prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len() as f64;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(Tensor::scalar(sum / n))
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone().with_requires_grad(false);
    out.zero_grad();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}
