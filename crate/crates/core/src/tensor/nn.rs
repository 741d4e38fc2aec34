use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Swish,
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Swish => x * sigmoid(x),
        }
    }

    /// Derivative at input `x` given the forward value `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Swish => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
        }
    }
}

pub fn activation(input: &Tensor, kind: Activation) -> Tensor {
    input.map(|x| kind.apply(x))
}

/// Chain rule through an elementwise activation.
pub fn activation_grad(input: &Tensor, output: &Tensor, grad_out: &Tensor, kind: Activation) -> Tensor {
    let data = input
        .data()
        .iter()
        .zip(output.data())
        .zip(grad_out.data())
        .map(|((&x, &y), &g)| g * kind.derivative(x, y))
        .collect();
    Tensor::from_parts(input.shape().to_vec(), data)
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Max-subtracted softmax along `axis`.
pub fn softmax(input: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= input.rank() {
        return Err(Error::invalid(format!(
            "softmax axis {axis} for rank-{} tensor",
            input.rank()
        )));
    }
    let (outer, n, inner) = axis_split(input.shape(), axis);
    let x = input.data();
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * n + j) * inner + i;
            let m = (0..n).map(|j| x[at(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..n {
                let e = (x[at(j)] - m).exp();
                out[at(j)] = e;
                z += e;
            }
            for j in 0..n {
                out[at(j)] /= z;
            }
        }
    }
    Ok(Tensor::from_parts(input.shape().to_vec(), out))
}

/// `dx = y ⊙ (dy − Σ_axis dy ⊙ y)`.
pub fn softmax_backward(output: &Tensor, grad_out: &Tensor, axis: usize) -> Tensor {
    let (outer, n, inner) = axis_split(output.shape(), axis);
    let (y, dy) = (output.data(), grad_out.data());
    let mut dx = vec![0.0; y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * n + j) * inner + i;
            let s: f64 = (0..n).map(|j| y[at(j)] * dy[at(j)]).sum();
            for j in 0..n {
                dx[at(j)] = y[at(j)] * (dy[at(j)] - s);
            }
        }
    }
    Tensor::from_parts(output.shape().to_vec(), dx)
}

/// Per-channel running mean and variance of a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    pub fn update(&mut self, batch_mean: &[f64], batch_var: &[f64]) {
        for (r, &b) in self.mean.iter_mut().zip(batch_mean) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
        }
        for (r, &b) in self.var.iter_mut().zip(batch_var) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
        }
    }
}

pub struct BatchNormOutput {
    pub output: Tensor,
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
    /// Batch statistics; only populated in train mode.
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pub mode: Mode,
}

/// Normalizes each channel (last axis) over every other axis.
pub fn batch_norm(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running: &RunningStats,
    mode: Mode,
) -> Result<BatchNormOutput> {
    let c = *input
        .shape()
        .last()
        .ok_or_else(|| Error::shape("batch_norm", "rank-0 input"))?;
    if gamma.len() != c || beta.len() != c || running.mean.len() != c || running.var.len() != c {
        return Err(Error::shape(
            "batch_norm",
            format!(
                "channel extent {c} vs gamma {} beta {} running {}",
                gamma.len(),
                beta.len(),
                running.mean.len()
            ),
        ));
    }
    let x = input.data();
    let m = (x.len() / c) as f64;
    let (mean, var) = match mode {
        Mode::Train => {
            let mut mean = vec![0.0; c];
            for row in x.chunks(c) {
                for (a, v) in mean.iter_mut().zip(row) {
                    *a += v;
                }
            }
            mean.iter_mut().for_each(|a| *a /= m);
            let mut var = vec![0.0; c];
            for row in x.chunks(c) {
                for ((a, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                    *a += (v - mu) * (v - mu);
                }
            }
            var.iter_mut().for_each(|a| *a /= m);
            (mean, var)
        }
        Mode::Infer => (running.mean.clone(), running.var.clone()),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for ((row, hrow), orow) in x.chunks(c).zip(xhat.chunks_mut(c)).zip(out.chunks_mut(c)) {
        for j in 0..c {
            let h = (row[j] - mean[j]) * inv_std[j];
            hrow[j] = h;
            orow[j] = gamma.data()[j] * h + beta.data()[j];
        }
    }
    let (batch_mean, batch_var) = match mode {
        Mode::Train => (mean, var),
        Mode::Infer => (Vec::new(), Vec::new()),
    };
    Ok(BatchNormOutput {
        output: Tensor::from_parts(input.shape().to_vec(), out),
        xhat: Tensor::from_parts(input.shape().to_vec(), xhat),
        inv_std,
        batch_mean,
        batch_var,
        mode,
    })
}

/// Returns (d input, d gamma, d beta).
pub fn batch_norm_backward(fwd: &BatchNormOutput, gamma: &Tensor, grad_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let c = gamma.len();
    let (xhat, dy) = (fwd.xhat.data(), grad_out.data());
    let m = (xhat.len() / c) as f64;
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for (hrow, drow) in xhat.chunks(c).zip(dy.chunks(c)) {
        for j in 0..c {
            dgamma[j] += drow[j] * hrow[j];
            dbeta[j] += drow[j];
        }
    }
    let g = gamma.data();
    let mut dx = vec![0.0; xhat.len()];
    for ((hrow, drow), xrow) in xhat.chunks(c).zip(dy.chunks(c)).zip(dx.chunks_mut(c)) {
        for j in 0..c {
            xrow[j] = match fwd.mode {
                Mode::Train => g[j] * fwd.inv_std[j] / m * (m * drow[j] - dbeta[j] - hrow[j] * dgamma[j]),
                Mode::Infer => g[j] * fwd.inv_std[j] * drow[j],
            };
        }
    }
    let shape = grad_out.shape().to_vec();
    (
        Tensor::from_parts(shape, dx),
        Tensor::from_parts(vec![c], dgamma),
        Tensor::from_parts(vec![c], dbeta),
    )
}

/// Inverted-dropout mask: 0 with probability `rate`, else `1 / (1 - rate)`.
pub fn dropout_mask(shape: &[usize], rate: f64, rng: &mut impl Rng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(Tensor::from_fn(
        shape,
        |_| {
            if rng.gen::<f64>() < rate {
                0.0
            } else {
                keep
            }
        },
    ))
}

pub fn dropout(input: &Tensor, rate: f64, rng: &mut impl Rng, mode: Mode) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(input.clone());
    }
    let mask = dropout_mask(input.shape(), rate, rng)?;
    input.zip_map(&mask, |x, m| x * m)
}
