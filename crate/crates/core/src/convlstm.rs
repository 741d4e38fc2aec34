//! Convolutional LSTM cells over 2-D or 3-D feature maps.
//!
//! Tensors are `[B, spatial.., C]`. Sequences are slices of a graph, one
//! [`Var`] per time step; stacked sequences carry time as axis 1.

use rand::Rng;

use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReturnMode {
    Last,
    All,
}

#[derive(Clone, Copy, Debug)]
pub struct CellState {
    pub h: Var,
    pub c: Var,
}

/// One ConvLSTM layer. The four gate transforms (i, f, c, o) are fused into
/// a single convolution with `4 * hidden` output channels.
#[derive(Clone, Debug)]
pub struct ConvLstm {
    pub name: String,
    pub in_channels: usize,
    pub hidden: usize,
    x_spec: ConvSpec,
    h_spec: ConvSpec,
    wx: ParamId,
    wh: ParamId,
    bias: ParamId,
    peepholes: Option<[ParamId; 3]>,
}

impl ConvLstm {
    /// Registers a layer with cubic `kernel` of the given spatial `rank`.
    /// `peephole_extents` enables peepholes sized to the cell state.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        rank: usize,
        kernel: usize,
        in_channels: usize,
        hidden: usize,
        peephole_extents: Option<&[usize]>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if !(1..=3).contains(&rank) || kernel == 0 || in_channels == 0 || hidden == 0 {
            return Err(Error::invalid(format!(
                "{name}: rank {rank}, kernel {kernel}, channels {in_channels}->{hidden}"
            )));
        }
        let k = vec![kernel; rank];
        let x_spec = ConvSpec::same(&k, in_channels, 4 * hidden);
        let h_spec = ConvSpec::same(&k, hidden, 4 * hidden);
        let taps = kernel.pow(rank as u32) as f64;
        let bx = 1.0 / (taps * in_channels as f64).sqrt();
        let bh = 1.0 / (taps * hidden as f64).sqrt();
        let wx = store.add(
            format!("{name}.wx"),
            Tensor::random_uniform(&x_spec.weight_shape(), -bx, bx, rng),
            true,
        )?;
        let wh = store.add(
            format!("{name}.wh"),
            Tensor::random_uniform(&h_spec.weight_shape(), -bh, bh, rng),
            true,
        )?;
        let bias = store.add(
            format!("{name}.b"),
            Tensor::from_fn(&[4 * hidden], |i| if i / hidden == 1 { 1.0 } else { 0.0 }),
            true,
        )?;
        let peepholes = match peephole_extents {
            None => None,
            Some(ext) => {
                if ext.len() != rank {
                    return Err(Error::invalid(format!(
                        "{name}: peephole extents {ext:?} for rank {rank}"
                    )));
                }
                let mut shape = vec![1];
                shape.extend_from_slice(ext);
                shape.push(hidden);
                let mut ids = [wx; 3];
                for (slot, gate) in ids.iter_mut().zip(["i", "f", "o"]) {
                    *slot = store.add(format!("{name}.peep_{gate}"), Tensor::zeros(&shape), true)?;
                }
                Some(ids)
            }
        };
        Ok(ConvLstm {
            name: name.to_string(),
            in_channels,
            hidden,
            x_spec,
            h_spec,
            wx,
            wh,
            bias,
            peepholes,
        })
    }

    pub fn rank(&self) -> usize {
        self.x_spec.rank()
    }

    pub fn kernel(&self) -> usize {
        self.x_spec.kernel[0]
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut ids = vec![self.wx, self.wh, self.bias];
        if let Some(p) = self.peepholes {
            ids.extend(p);
        }
        ids
    }

    pub fn bias_id(&self) -> ParamId {
        self.bias
    }

    fn check_input(&self, g: &Graph, x: Var, state: Option<CellState>) -> Result<()> {
        let xs = g.shape(x);
        let rank = self.rank();
        if xs.len() != rank + 2 || xs[rank + 1] != self.in_channels {
            return Err(Error::shape(
                "convlstm_step",
                format!(
                    "{}: input {xs:?}, expected [B, {rank} spatial axes, {}]",
                    self.name, self.in_channels
                ),
            ));
        }
        if let Some(s) = state {
            let hs = g.shape(s.h);
            if hs[..rank + 1] != xs[..rank + 1] || hs[rank + 1] != self.hidden {
                return Err(Error::shape(
                    "convlstm_step",
                    format!("{}: input {xs:?} against state {hs:?}", self.name),
                ));
            }
        }
        Ok(())
    }

    /// One time step. `state = None` is the zero initial state.
    pub fn step(&self, g: &mut Graph, x: Var, state: Option<CellState>) -> Result<CellState> {
        self.check_input(g, x, state)?;
        let (wx, b) = (g.param(self.wx), g.param(self.bias));
        let mut gates = g.conv(x, wx, Some(b), &self.x_spec)?;
        if let Some(s) = state {
            let wh = g.param(self.wh);
            let hg = g.conv(s.h, wh, None, &self.h_spec)?;
            gates = g.add(gates, hg)?;
        }
        let axis = self.rank() + 1;
        let n = self.hidden;
        let mut zi = g.slice(gates, axis, 0, n)?;
        let zc = g.slice(gates, axis, 2 * n, n)?;
        let mut zo = g.slice(gates, axis, 3 * n, n)?;
        let peep = self.peepholes.map(|p| p.map(|id| g.param(id)));
        if let (Some(s), Some([pi, _, _])) = (state, peep) {
            let t = g.mul(s.c, pi)?;
            zi = g.add(zi, t)?;
        }
        let i = g.sigmoid(zi);
        let cand = g.tanh(zc);
        let mut c = g.mul(i, cand)?;
        if let Some(s) = state {
            let mut zf = g.slice(gates, axis, n, n)?;
            if let Some([_, pf, _]) = peep {
                let t = g.mul(s.c, pf)?;
                zf = g.add(zf, t)?;
            }
            let f = g.sigmoid(zf);
            let kept = g.mul(f, s.c)?;
            c = g.add(kept, c)?;
        }
        if let Some([_, _, po]) = peep {
            let t = g.mul(c, po)?;
            zo = g.add(zo, t)?;
        }
        let o = g.sigmoid(zo);
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok(CellState { h, c })
    }

    /// Hidden outputs for each element of `seq`, starting from zero state.
    pub fn forward_seq(&self, g: &mut Graph, seq: &[Var]) -> Result<Vec<Var>> {
        if seq.is_empty() {
            return Err(Error::invalid(format!("{}: empty sequence", self.name)));
        }
        let mut state = None;
        let mut out = Vec::with_capacity(seq.len());
        for &x in seq {
            let s = self.step(g, x, state)?;
            out.push(s.h);
            state = Some(s);
        }
        Ok(out)
    }

    /// `Last` gives `[B, spatial.., hidden]`; `All` stacks time as axis 1.
    pub fn forward(&self, g: &mut Graph, seq: &[Var], mode: ReturnMode) -> Result<Var> {
        let hs = self.forward_seq(g, seq)?;
        match mode {
            ReturnMode::Last => Ok(*hs.last().expect("non-empty")),
            ReturnMode::All => stack_time(g, &hs),
        }
    }
}

/// `τ` tensors of shape `[B, ..]` into one `[B, τ, ..]`.
pub fn stack_time(g: &mut Graph, xs: &[Var]) -> Result<Var> {
    let lifted = xs
        .iter()
        .map(|&x| {
            let mut shape = g.shape(x).to_vec();
            shape.insert(1, 1);
            g.reshape(x, &shape)
        })
        .collect::<Result<Vec<_>>>()?;
    g.concat(&lifted, 1)
}

/// Inverse of [`stack_time`].
pub fn unstack_time(g: &mut Graph, x: Var) -> Result<Vec<Var>> {
    let shape = g.shape(x).to_vec();
    if shape.len() < 3 {
        return Err(Error::shape("unstack_time", format!("{shape:?} has no time axis")));
    }
    let mut item = shape.clone();
    item.remove(1);
    (0..shape[1])
        .map(|t| {
            let s = g.slice(x, 1, t, 1)?;
            g.reshape(s, &item)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::autodiff::{finite_diff_check, GradCheckOptions};
    use crate::tensor::{conv, Mode};

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn randn(shape: &[usize], seed: u64) -> Tensor {
        Tensor::random_normal(shape, 1.0, &mut rng(seed))
    }

    #[test]
    fn zero_everything_gives_zero_state() {
        let mut store = ParamStore::new();
        let layer = ConvLstm::new(&mut store, "l", 2, 3, 2, 4, None, &mut rng(0)).unwrap();
        store.set(layer.bias_id(), Tensor::zeros(&[16])).unwrap();
        let mut g = Graph::new(&store, Mode::Infer, 0);
        let x = g.input(Tensor::zeros(&[1, 5, 5, 2]));
        let s1 = layer.step(&mut g, x, None).unwrap();
        let s2 = layer.step(&mut g, x, Some(s1)).unwrap();
        assert!(g.value(s2.h).data().iter().all(|&v| v == 0.0));
        assert!(g.value(s2.c).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn table_shapes() {
        let mut store = ParamStore::new();
        let l2 = ConvLstm::new(&mut store, "a", 2, 3, 1, 32, None, &mut rng(0)).unwrap();
        let l3 = ConvLstm::new(&mut store, "b", 3, 3, 1, 32, None, &mut rng(1)).unwrap();
        let mut g = Graph::new(&store, Mode::Infer, 0);
        let x2 = g.input(randn(&[1, 13, 13, 1], 2));
        let x3 = g.input(randn(&[1, 13, 13, 10, 1], 3));
        let h2 = l2.forward(&mut g, &[x2], ReturnMode::Last).unwrap();
        let h3 = l3.forward(&mut g, &[x3], ReturnMode::All).unwrap();
        assert_eq!(g.shape(h2), &[1, 13, 13, 32]);
        assert_eq!(g.shape(h3), &[1, 1, 13, 13, 10, 32]);
    }

    #[test]
    fn errors() {
        let mut store = ParamStore::new();
        let l = ConvLstm::new(&mut store, "a", 2, 3, 2, 3, None, &mut rng(0)).unwrap();
        let mut g = Graph::new(&store, Mode::Infer, 0);
        assert!(l.forward(&mut g, &[], ReturnMode::Last).is_err());
        let bad = g.input(Tensor::zeros(&[1, 4, 4, 3]));
        assert!(l.step(&mut g, bad, None).is_err());
        let x = g.input(Tensor::zeros(&[1, 4, 4, 2]));
        let y = g.input(Tensor::zeros(&[1, 5, 4, 2]));
        let s = l.step(&mut g, x, None).unwrap();
        let err = l.step(&mut g, y, Some(s)).unwrap_err();
        assert!(err.to_string().contains("state"), "{err}");
        assert!(ConvLstm::new(&mut store, "a", 2, 3, 2, 3, None, &mut rng(0)).is_err());
    }

    /// Plain scalar LSTM, the reference for 1×1 cells with 1×1 kernels.
    fn scalar_lstm(xs: &[f64], wx: [f64; 4], wh: [f64; 4], b: [f64; 4]) -> Vec<(f64, f64)> {
        let (mut h, mut c) = (0.0, 0.0);
        xs.iter()
            .map(|&x| {
                let z = |k: usize| wx[k] * x + wh[k] * h + b[k];
                let i = sigmoid(z(0));
                let f = sigmoid(z(1));
                let cand = z(2).tanh();
                let o = sigmoid(z(3));
                c = f * c + i * cand;
                h = o * c.tanh();
                (h, c)
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn matches_scalar_lstm(
            xs in prop::collection::vec(-3.0f64..3.0, 1..8),
            wx in prop::array::uniform4(-2.0f64..2.0),
            wh in prop::array::uniform4(-2.0f64..2.0),
            b in prop::array::uniform4(-1.0f64..1.0),
            rank in 2usize..4,
        ) {
            let mut store = ParamStore::new();
            let l = ConvLstm::new(&mut store, "s", rank, 1, 1, 1, None, &mut rng(0)).unwrap();
            let ids = l.params();
            store.set(ids[0], Tensor::new(vec![1; rank].into_iter().chain([1, 4]).collect(), wx.to_vec()).unwrap()).unwrap();
            store.set(ids[1], Tensor::new(vec![1; rank].into_iter().chain([1, 4]).collect(), wh.to_vec()).unwrap()).unwrap();
            store.set(ids[2], Tensor::from_vec(b.to_vec())).unwrap();
            let mut g = Graph::new(&store, Mode::Infer, 0);
            let item: Vec<usize> = vec![1; rank + 2];
            let seq: Vec<Var> = xs.iter().map(|&x| g.input(Tensor::new(item.clone(), vec![x]).unwrap())).collect();
            let mut state = None;
            let expected = scalar_lstm(&xs, wx, wh, b);
            for (&x, &(eh, ec)) in seq.iter().zip(&expected) {
                let s = l.step(&mut g, x, state).unwrap();
                prop_assert!((g.value(s.h).item() - eh).abs() <= 1e-10);
                prop_assert!((g.value(s.c).item() - ec).abs() <= 1e-10);
                state = Some(s);
            }
        }

        #[test]
        fn state_bounds(seed in 0u64..1000, tau in 1usize..6, amp in 0.1f64..20.0) {
            let mut store = ParamStore::new();
            let l = ConvLstm::new(&mut store, "s", 2, 3, 2, 3, None, &mut rng(seed)).unwrap();
            let mut g = Graph::new(&store, Mode::Infer, 0);
            let seq: Vec<Var> = (0..tau).map(|t| g.input(randn(&[2, 4, 3, 2], seed * 31 + t as u64).scale(amp))).collect();
            let mut state = None;
            for (t, &x) in seq.iter().enumerate() {
                let s = l.step(&mut g, x, state).unwrap();
                prop_assert!(g.value(s.h).max_abs() <= 1.0);
                prop_assert!(g.value(s.c).max_abs() <= (t + 1) as f64);
                state = Some(s);
            }
        }

        #[test]
        fn last_equals_final_of_all(seed in 0u64..1000, tau in 1usize..5) {
            let mut store = ParamStore::new();
            let l = ConvLstm::new(&mut store, "s", 3, 3, 2, 2, None, &mut rng(seed)).unwrap();
            let mut g = Graph::new(&store, Mode::Infer, 0);
            let seq: Vec<Var> = (0..tau).map(|t| g.input(randn(&[1, 3, 3, 2, 2], seed + t as u64))).collect();
            let last = l.forward(&mut g, &seq, ReturnMode::Last).unwrap();
            let all = l.forward(&mut g, &seq, ReturnMode::All).unwrap();
            prop_assert_eq!(g.shape(all)[1], tau);
            let steps = unstack_time(&mut g, all).unwrap();
            prop_assert_eq!(g.value(last).data(), g.value(steps[tau - 1]).data());
        }
    }

    #[test]
    fn single_step_sequence_is_a_step() {
        let mut store = ParamStore::new();
        let l = ConvLstm::new(&mut store, "s", 2, 3, 2, 4, None, &mut rng(3)).unwrap();
        let mut g = Graph::new(&store, Mode::Infer, 0);
        let x = g.input(randn(&[2, 5, 5, 2], 4));
        let a = l.forward(&mut g, &[x], ReturnMode::Last).unwrap();
        let b = l.step(&mut g, x, None).unwrap().h;
        assert_eq!(g.value(a).data(), g.value(b).data());
    }

    /// Recurrence evaluated with raw tensor ops, outside the graph.
    #[test]
    fn constant_input_matches_unrolled_oracle() {
        let mut store = ParamStore::new();
        let l = ConvLstm::new(&mut store, "s", 2, 3, 2, 3, None, &mut rng(5)).unwrap();
        let ids = l.params();
        let (wx, wh, b) = (
            store.get(ids[0]).clone(),
            store.get(ids[1]).clone(),
            store.get(ids[2]).clone(),
        );
        let x = randn(&[1, 4, 4, 2], 6);
        let n = 3;
        let mut h = Tensor::zeros(&[1, 4, 4, n]);
        let mut c = Tensor::zeros(&[1, 4, 4, n]);
        let mut expected = Vec::new();
        for _ in 0..3 {
            let zx = conv(&x, &ConvSpec::same(&[3, 3], 2, 4 * n), &wx, Some(&b)).unwrap();
            let zh = conv(&h, &ConvSpec::same(&[3, 3], n, 4 * n), &wh, None).unwrap();
            let z = zx.zip_map(&zh, |a, b| a + b).unwrap();
            let mut nh = h.clone();
            let mut nc = c.clone();
            for p in 0..16 {
                let zz = |k: usize, j: usize| z.data()[p * 4 * n + k * n + j];
                for j in 0..n {
                    let cv = sigmoid(zz(1, j)) * c.data()[p * n + j] + sigmoid(zz(0, j)) * zz(2, j).tanh();
                    nc.data_mut()[p * n + j] = cv;
                    nh.data_mut()[p * n + j] = sigmoid(zz(3, j)) * cv.tanh();
                }
            }
            h = nh;
            c = nc;
            expected.push(h.clone());
        }
        let mut g = Graph::new(&store, Mode::Infer, 0);
        let xv = g.input(x);
        let hs = l.forward_seq(&mut g, &[xv, xv, xv]).unwrap();
        for (got, want) in hs.iter().zip(&expected) {
            for (a, b) in g.value(*got).data().iter().zip(want.data()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gradcheck_two_step_cells() {
        for (rank, peep) in [(2, false), (2, true), (3, false), (3, true)] {
            let mut store = ParamStore::new();
            let ext = vec![3; rank];
            let l = ConvLstm::new(
                &mut store,
                "s",
                rank,
                3,
                2,
                2,
                peep.then_some(ext.as_slice()),
                &mut rng(8),
            )
            .unwrap();
            if let Some(p) = l.peepholes {
                for (k, id) in p.into_iter().enumerate() {
                    let shape = store.get(id).shape().to_vec();
                    store.set(id, randn(&shape, 20 + k as u64).scale(0.5)).unwrap();
                }
            }
            let mut shape = vec![2];
            shape.extend(&ext);
            shape.push(2);
            let x0 = randn(&shape, 9);
            let x1 = randn(&shape, 10);
            let report = finite_diff_check(
                &store,
                |g| {
                    let a = g.input(x0.clone());
                    let b = g.input(x1.clone());
                    let h = l.forward(g, &[a, b], ReturnMode::All)?;
                    let r = g.input(randn(g.shape(h), 11));
                    let p = g.mul(h, r)?;
                    Ok(g.sum(p))
                },
                &GradCheckOptions::default(),
            )
            .unwrap();
            assert!(report.passed(), "rank {rank} peep {peep}: {:?}", report.worst());
            assert_eq!(report.params.len(), if peep { 6 } else { 3 });
        }
    }

    #[test]
    fn stack_unstack_roundtrip() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store, Mode::Infer, 0);
        let xs: Vec<Var> = (0..3).map(|t| g.input(randn(&[2, 3, 2], t))).collect();
        let s = stack_time(&mut g, &xs).unwrap();
        assert_eq!(g.shape(s), &[2, 3, 3, 2]);
        let back = unstack_time(&mut g, s).unwrap();
        for (a, b) in xs.iter().zip(&back) {
            assert_eq!(g.value(*a).data(), g.value(*b).data());
        }
    }
}
