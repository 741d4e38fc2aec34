//! Spectral, spatial and multiscale attention blocks and the composite
//! first-level fusion.

use rand::Rng;

use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::convlstm::{stack_time, unstack_time, ConvLstm, ReturnMode};
use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, Tensor};

/// Normalized weights and the reweighted input.
#[derive(Clone, Copy, Debug)]
pub struct AttentionOutput {
    pub weights: Var,
    pub enhanced: Var,
}

/// Spectral attention over `[B, w, h, s, c]`. Weights are `[B, s]`.
#[derive(Clone, Debug)]
pub struct Seab {
    pub conv3: ConvLstm,
    pub conv1: ConvLstm,
}

impl Seab {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Seab {
            conv3: ConvLstm::new(store, &format!("{name}.conv3"), 2, 3, channels, hidden, None, rng)?,
            conv1: ConvLstm::new(store, &format!("{name}.conv1"), 2, 1, hidden, 1, None, rng)?,
        })
    }

    pub fn params(&self) -> Vec<ParamId> {
        [self.conv3.params(), self.conv1.params()].concat()
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<AttentionOutput> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 5 || shape[3] == 0 {
            return Err(Error::shape(
                "seab",
                format!("input {shape:?}, expected [B, w, h, s, c]"),
            ));
        }
        let (b, w, h, s, c) = (shape[0], shape[1], shape[2], shape[3], shape[4]);
        let slices = (0..s)
            .map(|t| {
                let sl = g.slice(x, 3, t, 1)?;
                g.reshape(sl, &[b, w, h, c])
            })
            .collect::<Result<Vec<_>>>()?;
        let hidden = self.conv3.forward_seq(g, &slices)?;
        let maps = self.conv1.forward_seq(g, &hidden)?;
        let logits = maps
            .iter()
            .map(|&z| {
                let m = g.mean_axes(z, &[1, 2])?;
                g.reshape(m, &[b, 1])
            })
            .collect::<Result<Vec<_>>>()?;
        let z = g.concat(&logits, 1)?;
        let alpha = g.softmax(z, 1)?;
        let a = g.reshape(alpha, &[b, 1, 1, s, 1])?;
        let enhanced = g.mul(x, a)?;
        Ok(AttentionOutput {
            weights: alpha,
            enhanced,
        })
    }
}

/// Spatial attention over `[B, w, h, c]`. Weights are `[B, w, h, 1]`.
#[derive(Clone, Debug)]
pub struct Saab {
    pub conv3: ConvLstm,
    pub conv1: ConvLstm,
}

impl Saab {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Saab {
            conv3: ConvLstm::new(store, &format!("{name}.conv3"), 2, 3, channels, hidden, None, rng)?,
            conv1: ConvLstm::new(store, &format!("{name}.conv1"), 2, 1, hidden, 1, None, rng)?,
        })
    }

    pub fn params(&self) -> Vec<ParamId> {
        [self.conv3.params(), self.conv1.params()].concat()
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<AttentionOutput> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 4 {
            return Err(Error::shape("saab", format!("input {shape:?}, expected [B, w, h, c]")));
        }
        let (b, w, h) = (shape[0], shape[1], shape[2]);
        let hid = self.conv3.step(g, x, None)?.h;
        let z = self.conv1.step(g, hid, None)?.h;
        let flat = g.reshape(z, &[b, w * h])?;
        let alpha = g.softmax(flat, 1)?;
        let alpha = g.reshape(alpha, &[b, w, h, 1])?;
        let enhanced = g.mul(x, alpha)?;
        Ok(AttentionOutput {
            weights: alpha,
            enhanced,
        })
    }
}

/// `α ⊙ X̂ + X̂` with `α [B, w, h, 1]` broadcast over spectral and channel axes.
pub fn composite_fuse(g: &mut Graph, hsi: Var, spatial: Var) -> Result<Var> {
    let (xs, a) = (g.shape(hsi).to_vec(), g.shape(spatial).to_vec());
    if xs.len() != 5 || a.len() != 4 || a[..3] != xs[..3] || a[3] != 1 {
        return Err(Error::shape(
            "composite_fuse",
            format!("features {xs:?} against spatial attention {a:?}"),
        ));
    }
    let lifted = g.reshape(spatial, &[a[0], a[1], a[2], 1, 1])?;
    let weighted = g.mul(hsi, lifted)?;
    g.add(weighted, hsi)
}

#[derive(Clone, Copy, Debug)]
pub struct MsrabOutput {
    /// `[B, 3τ, spatial.., out_channels]`.
    pub output: Var,
    /// `[B, 3τ]`.
    pub weights: Var,
}

/// Multiscale residual attention over time-stacked `[B, τ, spatial.., c]`.
#[derive(Clone, Debug)]
pub struct Msrab {
    pub rank: usize,
    pub scales: [ConvLstm; 3],
    pub att3: ConvLstm,
    pub att1: ConvLstm,
    pub fusion: ConvLstm,
    projection: Option<(ConvSpec, ParamId)>,
}

impl Msrab {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        rank: usize,
        channels: usize,
        out_channels: usize,
        fusion_kernel: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut scale =
            |k: usize| ConvLstm::new(store, &format!("{name}.f{k}"), rank, k, channels, channels, None, rng);
        let scales = [scale(1)?, scale(3)?, scale(5)?];
        let att3 = ConvLstm::new(store, &format!("{name}.att3"), rank, 3, channels, hidden, None, rng)?;
        let att1 = ConvLstm::new(store, &format!("{name}.att1"), rank, 1, hidden, channels, None, rng)?;
        let fusion = ConvLstm::new(
            store,
            &format!("{name}.fusion"),
            rank,
            fusion_kernel,
            channels,
            out_channels,
            None,
            rng,
        )?;
        let projection = if channels == out_channels {
            None
        } else {
            let spec = ConvSpec::same(&vec![1; rank], channels, out_channels);
            let bound = 1.0 / (channels as f64).sqrt();
            let w = Tensor::random_uniform(&spec.weight_shape(), -bound, bound, rng);
            Some((spec, store.add(format!("{name}.proj"), w, true)?))
        };
        Ok(Msrab {
            rank,
            scales,
            att3,
            att1,
            fusion,
            projection,
        })
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.scales.iter().flat_map(|s| s.params()).collect();
        ids.extend(self.att3.params());
        ids.extend(self.att1.params());
        ids.extend(self.fusion.params());
        ids.extend(self.projection.as_ref().map(|p| p.1));
        ids
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<MsrabOutput> {
        let shape = g.shape(x).to_vec();
        if shape.len() != self.rank + 3 {
            return Err(Error::shape(
                "msrab",
                format!("input {shape:?}, expected [B, τ, {} spatial axes, c]", self.rank),
            ));
        }
        let (b, tau) = (shape[0], shape[1]);
        let seq = unstack_time(g, x)?;
        let mut multi = Vec::with_capacity(3 * tau);
        for f in &self.scales {
            multi.extend(f.forward_seq(g, &seq)?);
        }
        let hidden = self.att3.forward_seq(g, &multi)?;
        let maps = self.att1.forward_seq(g, &hidden)?;
        let non_time: Vec<usize> = (1..self.rank + 2).collect();
        let logits = maps
            .iter()
            .map(|&z| {
                let m = g.mean_axes(z, &non_time)?;
                g.reshape(m, &[b, 1])
            })
            .collect::<Result<Vec<_>>>()?;
        let z = g.concat(&logits, 1)?;
        let alpha = g.softmax(z, 1)?;
        let stacked = stack_time(g, &multi)?;
        let mut a_shape = vec![b, 3 * tau];
        a_shape.extend(std::iter::repeat_n(1, self.rank + 1));
        let a = g.reshape(alpha, &a_shape)?;
        let weighted = g.mul(stacked, a)?;
        let weighted = unstack_time(g, weighted)?;
        let fused = self.fusion.forward(g, &weighted, ReturnMode::All)?;
        let mut residual = g.concat(&[x, x, x], 1)?;
        if let Some((spec, w)) = &self.projection {
            let wv = g.param(*w);
            residual = g.conv(residual, wv, None, spec)?;
        }
        let output = g.add(fused, residual)?;
        Ok(MsrabOutput { output, weights: alpha })
    }
}
