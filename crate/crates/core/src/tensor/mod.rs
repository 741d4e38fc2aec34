//! Dense row-major tensors and the primitive operations the network is built from.
//!
//! Layouts are channel-last. A 2-D feature map is `[w, h, c]`, a 3-D one is
//! `[w, h, s, c]`, and any number of leading axes (batch, time) may precede
//! the spatial axes; kernels treat those leading axes as independent items.

mod conv;
mod nn;
mod pool;
mod shape;

pub use conv::{conv, conv2d, conv3d, ConvGrads, ConvSpec};
pub use nn::{
    activation, activation_grad, batch_norm, batch_norm_backward, dropout, dropout_mask, softmax, softmax_backward,
    Activation, BatchNormOutput, Mode, RunningStats, BN_EPS, BN_MOMENTUM,
};
pub use pool::{global_avg_pool, max_pool, max_pool_backward, mean_axes, MaxPoolOutput};
pub(crate) use shape::unslice;
pub use shape::{concat, slice_axis};

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if let Some(axis) = shape.iter().position(|&e| e == 0) {
            return Err(Error::shape(
                "Tensor::new",
                format!("extent of axis {axis} is zero in {shape:?}"),
            ));
        }
        if numel(&shape) != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!(
                    "shape {shape:?} holds {} values but {} were given",
                    numel(&shape),
                    data.len()
                ),
            ));
        }
        Ok(Tensor { shape, data })
    }

    /// Caller guarantees `product(shape) == data.len()` and non-zero extents.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        debug_assert!(shape.iter().all(|&e| e > 0));
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(shape.iter().all(|&e| e > 0), "zero extent in {shape:?}");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel(shape)],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        let n = data.len();
        assert!(n > 0, "empty vector");
        Tensor { shape: vec![n], data }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = numel(shape);
        Tensor::from_parts(shape.to_vec(), (0..n).map(&mut f).collect())
    }

    pub fn random_uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        Self::from_fn(shape, |_| rng.gen_range(lo..hi))
    }

    pub fn random_normal(shape: &[usize], std: f64, rng: &mut impl Rng) -> Self {
        let normal = rand_distr::Normal::new(0.0, std).expect("finite std");
        Self::from_fn(shape, |_| rng.sample(normal))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value of a rank-0 or single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len());
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &e)| {
            assert!(i < e, "index {index:?} out of bounds for {:?}", self.shape);
            acc * e + i
        })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.len() || shape.contains(&0) {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape),
            ));
        }
        Ok(Tensor::from_parts(shape.to_vec(), self.data.clone()))
    }

    pub fn into_reshape(self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.len() || shape.contains(&0) {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape),
            ));
        }
        Ok(Tensor::from_parts(shape.to_vec(), self.data))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(
                "zip_map",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|x| x * c)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Index of the largest value, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &x) in self.data.iter().enumerate() {
            if x > self.data[best] {
                best = i;
            }
        }
        best
    }

    /// Elementwise product with numpy-style broadcasting over equal ranks.
    pub fn broadcast_mul(&self, other: &Tensor) -> Result<Tensor> {
        broadcast_binary(self, other, |a, b| a * b)
    }

    pub fn broadcast_add(&self, other: &Tensor) -> Result<Tensor> {
        broadcast_binary(self, other, |a, b| a + b)
    }

    /// Sums over the axes where `shape` has extent 1 and `self` does not.
    pub fn sum_to_shape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape == self.shape.as_slice() {
            return Ok(self.clone());
        }
        if shape.len() != self.rank() || shape.iter().zip(&self.shape).any(|(&t, &s)| t != s && t != 1) {
            return Err(Error::shape(
                "sum_to_shape",
                format!("cannot reduce {:?} to {shape:?}", self.shape),
            ));
        }
        let mut out = Tensor::zeros(shape);
        let strides = broadcast_strides(shape, &self.shape);
        for_each_offset(&self.shape, &strides, |src, dst| {
            out.data[dst] += self.data[src];
        });
        Ok(out)
    }
}

pub(crate) fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Strides of `shape` when read at the positions of `target`; broadcast axes get 0.
fn broadcast_strides(shape: &[usize], target: &[usize]) -> Vec<usize> {
    let base = row_major_strides(shape);
    shape
        .iter()
        .zip(target)
        .zip(base)
        .map(|((&s, &t), st)| if s == t { st } else { 0 })
        .collect()
}

/// Walks every position of `shape` in row-major order, reporting
/// (flat position, strided offset).
fn for_each_offset(shape: &[usize], strides: &[usize], mut f: impl FnMut(usize, usize)) {
    let rank = shape.len();
    if rank == 0 {
        f(0, 0);
        return;
    }
    let total = numel(shape);
    let inner = shape[rank - 1];
    let inner_stride = strides[rank - 1];
    let mut index = vec![0usize; rank];
    let mut base = 0usize;
    let mut flat = 0usize;
    while flat < total {
        for j in 0..inner {
            f(flat + j, base + j * inner_stride);
        }
        flat += inner;
        // carry into the outer axes
        let mut axis = rank - 1;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            index[axis] += 1;
            base += strides[axis];
            if index[axis] < shape[axis] {
                break;
            }
            base -= strides[axis] * shape[axis];
            index[axis] = 0;
        }
    }
}

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(Error::shape("broadcast", format!("rank mismatch {a:?} vs {b:?}")));
    }
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(axis, (&x, &y))| match (x, y) {
            _ if x == y => Ok(x),
            (1, _) => Ok(y),
            (_, 1) => Ok(x),
            _ => Err(Error::shape(
                "broadcast",
                format!("axis {axis}: {x} vs {y} ({a:?} vs {b:?})"),
            )),
        })
        .collect()
}

fn broadcast_binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape == b.shape {
        return a.zip_map(b, f);
    }
    let out_shape = broadcast_shape(&a.shape, &b.shape)?;
    let sa = broadcast_strides(&a.shape, &out_shape);
    let sb = broadcast_strides(&b.shape, &out_shape);
    let mut oa = vec![0usize; numel(&out_shape)];
    for_each_offset(&out_shape, &sa, |flat, off| oa[flat] = off);
    let mut data = vec![0.0; oa.len()];
    for_each_offset(&out_shape, &sb, |flat, off| {
        data[flat] = f(a.data[oa[flat]], b.data[off]);
    });
    Ok(Tensor::from_parts(out_shape, data))
}
