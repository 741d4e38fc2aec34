//! Tape-based reverse-mode differentiation over the tensor primitives.
//!
//! A [`Graph`] records every operation applied during one forward pass. Nodes
//! are appended after their inputs, so reverse insertion order is a valid
//! reverse topological order for [`Graph::backward`].

mod adam;
mod gradcheck;
mod loss;
mod params;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{finite_diff_check, GradCheckOptions, GradCheckReport, ParamCheck};
pub use loss::{cross_entropy, cross_entropy_batch, multi_task_loss, PROB_FLOOR};
pub use params::{ParamEntry, ParamId, ParamStore};

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{
    self, activation, activation_grad, batch_norm, batch_norm_backward, concat, dropout_mask, max_pool,
    max_pool_backward, mean_axes, slice_axis, softmax, softmax_backward, Activation, BatchNormOutput, ConvSpec, Mode,
    RunningStats, Tensor,
};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Input,
    Param(ParamId),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        spec: ConvSpec,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Act(Var, Activation),
    Softmax(Var, usize),
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Mean(Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        cache: Box<BatchNormOutput>,
    },
    Concat(Vec<Var>, usize),
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Reshape(Var),
    Dropout {
        x: Var,
        mask: Tensor,
    },
    Affine {
        x: Var,
        w: Var,
        b: Var,
    },
    CrossEntropy {
        probs: Var,
        labels: Vec<usize>,
    },
    Sum(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::Conv { .. } => "conv",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Act(..) => "activation",
            Op::Softmax(..) => "softmax",
            Op::MaxPool { .. } => "max_pool",
            Op::Mean(..) => "mean",
            Op::BatchNorm { .. } => "batch_norm",
            Op::Concat(..) => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape(..) => "reshape",
            Op::Dropout { .. } => "dropout",
            Op::Affine { .. } => "affine",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Sum(..) => "sum",
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    /// False for subgraphs that depend on no parameter; backward skips them.
    needs_grad: bool,
}

/// Running-statistics update produced by a train-mode batch norm.
#[derive(Clone, Debug)]
pub struct BnUpdate {
    pub mean: ParamId,
    pub var: ParamId,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    mode: Mode,
    rng: ChaCha8Rng,
    bn_updates: Vec<BnUpdate>,
}

impl<'s> Graph<'s> {
    /// `seed` drives dropout masks so a forward pass can be replayed exactly.
    pub fn new(store: &'s ParamStore, mode: Mode, seed: u64) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            params: HashMap::new(),
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            bn_updates: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn bn_updates(&self) -> &[BnUpdate] {
        &self.bn_updates
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[Var]) -> Var {
        debug_assert!(
            value.is_finite() || !inputs.iter().all(|v| self.value(*v).is_finite()) || matches!(op, Op::Input),
            "{} produced non-finite values from finite inputs",
            op.name()
        );
        let needs_grad = matches!(op, Op::Param(_)) || inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { op, value, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf; gradients are not propagated into it.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(Op::Input, value, &[])
    }

    /// Parameter leaf. Repeated calls for one id return the same node, so
    /// weights shared across time steps accumulate a single gradient.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(Op::Param(id), self.store.get(id).clone(), &[]);
        self.params.insert(id, v);
        v
    }

    /// Same value, cut from the gradient path.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.input(value)
    }

    pub fn conv(&mut self, x: Var, w: Var, b: Option<Var>, spec: &ConvSpec) -> Result<Var> {
        let value = tensor::conv(self.value(x), spec, self.value(w), b.map(|b| self.value(b)))?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(
            Op::Conv {
                x,
                w,
                b,
                spec: spec.clone(),
            },
            value,
            &inputs,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).broadcast_add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), value, &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).broadcast_mul(self.value(b))?;
        Ok(self.push(Op::Mul(a, b), value, &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).scale(c);
        self.push(Op::Scale(a, c), value, &[a])
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let value = activation(self.value(a), kind);
        self.push(Op::Act(a, kind), value, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Tanh)
    }

    pub fn swish(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Swish)
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let value = softmax(self.value(a), axis)?;
        Ok(self.push(Op::Softmax(a, axis), value, &[a]))
    }

    pub fn max_pool(&mut self, x: Var, window: &[usize]) -> Result<Var> {
        let out = max_pool(self.value(x), window)?;
        Ok(self.push(Op::MaxPool { x, argmax: out.argmax }, out.output, &[x]))
    }

    /// Mean over `axes`, kept as extent-1 axes.
    pub fn mean_axes(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let value = mean_axes(self.value(x), axes)?;
        Ok(self.push(Op::Mean(x), value, &[x]))
    }

    /// Batch norm over the channel (last) axis. `running` names the
    /// (mean, var) buffers; train mode records an update for them.
    pub fn batch_norm(&mut self, x: Var, gamma: ParamId, beta: ParamId, running: (ParamId, ParamId)) -> Result<Var> {
        let stats = RunningStats {
            mean: self.store.get(running.0).data().to_vec(),
            var: self.store.get(running.1).data().to_vec(),
        };
        let (gv, bv) = (self.param(gamma), self.param(beta));
        let out = batch_norm(self.value(x), self.value(gv), self.value(bv), &stats, self.mode)?;
        if self.mode == Mode::Train {
            self.bn_updates.push(BnUpdate {
                mean: running.0,
                var: running.1,
                batch_mean: out.batch_mean.clone(),
                batch_var: out.batch_var.clone(),
            });
        }
        let value = out.output.clone();
        Ok(self.push(
            Op::BatchNorm {
                x,
                gamma: gv,
                beta: bv,
                cache: Box::new(out),
            },
            value,
            &[x, gv, bv],
        ))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let refs: Vec<&Tensor> = xs.iter().map(|v| self.value(*v)).collect();
        let value = concat(&refs, axis)?;
        Ok(self.push(Op::Concat(xs.to_vec(), axis), value, xs))
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let value = slice_axis(self.value(x), axis, start, len)?;
        Ok(self.push(Op::Slice { x, axis, start }, value, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        Ok(self.push(Op::Reshape(x), value, &[x]))
    }

    /// Inverted dropout in train mode; identity otherwise.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        if self.mode == Mode::Infer || rate == 0.0 {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
            }
            return Ok(x);
        }
        let shape = self.shape(x).to_vec();
        let mask = dropout_mask(&shape, rate, &mut self.rng)?;
        let value = self.value(x).zip_map(&mask, |a, m| a * m)?;
        Ok(self.push(Op::Dropout { x, mask }, value, &[x]))
    }

    /// `x [B, F] · w [F, C] + b [C]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] || bs != [ws[1]] {
            return Err(Error::shape("affine", format!("x {xs:?}, w {ws:?}, b {bs:?}")));
        }
        let (n, f, c) = (xs[0], xs[1], ws[1]);
        let (xd, wd, bd) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = vec![0.0; n * c];
        for i in 0..n {
            let row = &mut out[i * c..(i + 1) * c];
            row.copy_from_slice(bd);
            for k in 0..f {
                let xv = xd[i * f + k];
                for (o, &wv) in row.iter_mut().zip(&wd[k * c..(k + 1) * c]) {
                    *o += xv * wv;
                }
            }
        }
        let value = Tensor::from_parts(vec![n, c], out);
        Ok(self.push(Op::Affine { x, w, b }, value, &[x, w, b]))
    }

    /// Mean over the batch of `-ln max(p[label], PROB_FLOOR)`; `probs` is `[B, N]`.
    pub fn cross_entropy(&mut self, probs: Var, labels: &[usize]) -> Result<Var> {
        let value = cross_entropy_batch(self.value(probs), labels)?;
        Ok(self.push(
            Op::CrossEntropy {
                probs,
                labels: labels.to_vec(),
            },
            Tensor::scalar(value),
            &[probs],
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(Op::Sum(x), value, &[x])
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.shape(loss)),
            ));
        }
        let mut adj: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));
        let mut params = HashMap::new();

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let send = |v: Var, t: Tensor, adj: &mut Vec<Option<Tensor>>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut adj[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    params.insert(*id, g.clone());
                }
                Op::Conv { x, w, b, spec } => {
                    let need_x = self.nodes[x.0].needs_grad;
                    let grads = spec.backward(self.value(*x), self.value(*w), &g, need_x)?;
                    if let Some(dx) = grads.input {
                        send(*x, dx, &mut adj);
                    }
                    send(*w, grads.weights, &mut adj);
                    if let Some(b) = b {
                        send(*b, grads.bias, &mut adj);
                    }
                }
                Op::Add(a, b) => {
                    send(*a, g.sum_to_shape(self.shape(*a))?, &mut adj);
                    send(*b, g.sum_to_shape(self.shape(*b))?, &mut adj);
                }
                Op::Mul(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        let da = g.broadcast_mul(self.value(*b))?.sum_to_shape(self.shape(*a))?;
                        send(*a, da, &mut adj);
                    }
                    if self.nodes[b.0].needs_grad {
                        let db = g.broadcast_mul(self.value(*a))?.sum_to_shape(self.shape(*b))?;
                        send(*b, db, &mut adj);
                    }
                }
                Op::Scale(a, c) => send(*a, g.scale(*c), &mut adj),
                Op::Act(a, kind) => send(*a, activation_grad(self.value(*a), &node.value, &g, *kind), &mut adj),
                Op::Softmax(a, axis) => send(*a, softmax_backward(&node.value, &g, *axis), &mut adj),
                Op::MaxPool { x, argmax } => send(*x, max_pool_backward(argmax, self.shape(*x), &g), &mut adj),
                Op::Mean(x) => {
                    let count = (self.value(*x).len() / node.value.len()) as f64;
                    let dx = Tensor::zeros(self.shape(*x)).broadcast_add(&g)?.scale(1.0 / count);
                    send(*x, dx, &mut adj);
                }
                Op::BatchNorm { x, gamma, beta, cache } => {
                    let (dx, dg, db) = batch_norm_backward(cache, self.value(*gamma), &g);
                    send(*x, dx, &mut adj);
                    send(*gamma, dg, &mut adj);
                    send(*beta, db, &mut adj);
                }
                Op::Concat(xs, axis) => {
                    let mut start = 0;
                    for x in xs {
                        let len = self.shape(*x)[*axis];
                        send(*x, slice_axis(&g, *axis, start, len)?, &mut adj);
                        start += len;
                    }
                }
                Op::Slice { x, axis, start } => send(*x, tensor::unslice(&g, self.shape(*x), *axis, *start), &mut adj),
                Op::Reshape(x) => send(*x, g.into_reshape(self.shape(*x))?, &mut adj),
                Op::Dropout { x, mask } => send(*x, g.zip_map(mask, |a, m| a * m)?, &mut adj),
                Op::Affine { x, w, b } => {
                    let (n, f) = (self.shape(*x)[0], self.shape(*x)[1]);
                    let c = self.shape(*w)[1];
                    let (xd, wd, gd) = (self.value(*x).data(), self.value(*w).data(), g.data());
                    if self.nodes[x.0].needs_grad {
                        let mut dx = vec![0.0; n * f];
                        for i in 0..n {
                            for k in 0..f {
                                dx[i * f + k] = gd[i * c..(i + 1) * c]
                                    .iter()
                                    .zip(&wd[k * c..(k + 1) * c])
                                    .map(|(a, b)| a * b)
                                    .sum();
                            }
                        }
                        send(*x, Tensor::from_parts(vec![n, f], dx), &mut adj);
                    }
                    let mut dw = vec![0.0; f * c];
                    let mut db = vec![0.0; c];
                    for i in 0..n {
                        let grow = &gd[i * c..(i + 1) * c];
                        for k in 0..f {
                            let xv = xd[i * f + k];
                            for (o, &gv) in dw[k * c..(k + 1) * c].iter_mut().zip(grow) {
                                *o += xv * gv;
                            }
                        }
                        for (o, &gv) in db.iter_mut().zip(grow) {
                            *o += gv;
                        }
                    }
                    send(*w, Tensor::from_parts(vec![f, c], dw), &mut adj);
                    send(*b, Tensor::from_parts(vec![c], db), &mut adj);
                }
                Op::CrossEntropy { probs, labels } => {
                    let p = self.value(*probs);
                    let classes = p.shape()[1];
                    let scale = g.item() / labels.len() as f64;
                    let mut dp = Tensor::zeros(p.shape());
                    for (i, &y) in labels.iter().enumerate() {
                        let pv = p.data()[i * classes + y];
                        if pv > PROB_FLOOR {
                            dp.data_mut()[i * classes + y] = -scale / pv;
                        }
                    }
                    send(*probs, dp, &mut adj);
                }
                Op::Sum(x) => {
                    let dx = Tensor::full(self.shape(*x), g.item());
                    send(*x, dx, &mut adj);
                }
            }
        }
        Ok(Gradients { params })
    }
}

/// Parameter gradients from one backward sweep.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    params: HashMap<ParamId, Tensor>,
}

impl Gradients {
    /// Gradient of `id`; zero when the parameter did not reach the loss.
    pub fn get(&self, id: ParamId, store: &ParamStore) -> Tensor {
        self.params
            .get(&id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(store.get(id).shape()))
    }

    pub fn get_ref(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    pub fn contains(&self, id: ParamId) -> bool {
        self.params.contains_key(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().map(|(k, v)| (*k, v))
    }

    /// Elementwise sum of two gradient maps.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (id, t) in &other.params {
            match self.params.get_mut(id) {
                Some(acc) => acc.add_assign(t),
                None => {
                    self.params.insert(*id, t.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for t in self.params.values_mut() {
            *t = t.scale(c);
        }
    }
}

/// Applies batch-norm running-stat updates recorded during a train-mode pass.
pub fn apply_bn_updates(store: &mut ParamStore, updates: &[BnUpdate]) {
    for u in updates {
        let mut stats = RunningStats {
            mean: store.get(u.mean).data().to_vec(),
            var: store.get(u.var).data().to_vec(),
        };
        stats.update(&u.batch_mean, &u.batch_var);
        store.get_mut(u.mean).data_mut().copy_from_slice(&stats.mean);
        store.get_mut(u.var).data_mut().copy_from_slice(&stats.var);
    }
}
