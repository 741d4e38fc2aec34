use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::NetworkConfig;
use crate::attention::{composite_fuse, Msrab, Saab, Seab};
use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::convlstm::{unstack_time, ConvLstm, ReturnMode};
use crate::data::PatchSet;
use crate::error::{Error, Result};
use crate::tensor::{Mode, Tensor};

/// Which heads a forward pass produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// LiDAR branch alone.
    Lidar,
    /// HSI branch alone, without first-level fusion.
    Hsi,
    /// Both branches and the fusion network.
    Fused,
}

impl Route {
    /// Parameter-name prefixes owned by the route.
    pub fn prefixes(self) -> &'static [&'static str] {
        match self {
            Route::Lidar => &["lidar."],
            Route::Hsi => &["hsi."],
            Route::Fused => &["lidar.", "hsi.", "fusion."],
        }
    }
}

/// Affine map to class logits followed by softmax.
#[derive(Clone, Debug)]
pub struct Head {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Head {
    fn new(store: &mut ParamStore, name: &str, features: usize, classes: usize, rng: &mut impl Rng) -> Result<Self> {
        let bound = 1.0 / (features as f64).sqrt();
        Ok(Head {
            weight: store.add(
                format!("{name}.w"),
                Tensor::random_uniform(&[features, classes], -bound, bound, rng),
                true,
            )?,
            bias: store.add(format!("{name}.b"), Tensor::zeros(&[classes]), true)?,
        })
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (w, b) = (g.param(self.weight), g.param(self.bias));
        let logits = g.affine(x, w, b)?;
        g.softmax(logits, 1)
    }
}

#[derive(Clone, Debug)]
struct BatchNorm {
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
}

impl BatchNorm {
    fn new(store: &mut ParamStore, name: &str, channels: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: store.add(format!("{name}.gamma"), Tensor::ones(&[channels]), true)?,
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[channels]), true)?,
            mean: store.add(format!("{name}.running_mean"), Tensor::zeros(&[channels]), false)?,
            var: store.add(format!("{name}.running_var"), Tensor::ones(&[channels]), false)?,
        })
    }
}

/// MSRAB, or a single `a x a` ConvLSTM when the block is ablated.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Multiscale {
    Msrab(Msrab),
    Plain(ConvLstm),
}

impl Multiscale {
    #[allow(clippy::too_many_arguments)]
    fn new(
        store: &mut ParamStore,
        name: &str,
        on: bool,
        rank: usize,
        channels: usize,
        out: usize,
        kernel: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(if on {
            Multiscale::Msrab(Msrab::new(
                store,
                &format!("{name}.msrab"),
                rank,
                channels,
                out,
                kernel,
                hidden,
                rng,
            )?)
        } else {
            Multiscale::Plain(ConvLstm::new(
                store,
                &format!("{name}.multiscale"),
                rank,
                kernel,
                channels,
                out,
                None,
                rng,
            )?)
        })
    }

    /// `[B, τ, spatial.., c]` to `[B, τ', spatial.., out]` plus attention weights.
    fn forward(&self, g: &mut Graph, x: Var) -> Result<(Var, Option<Var>)> {
        match self {
            Multiscale::Msrab(m) => {
                let o = m.forward(g, x)?;
                Ok((o.output, Some(o.weights)))
            }
            Multiscale::Plain(cl) => {
                let seq = unstack_time(g, x)?;
                Ok((cl.forward(g, &seq, ReturnMode::All)?, None))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct HsiBranch {
    pub convlstm: ConvLstm,
    pub seab: Option<Seab>,
    pub multiscale: Multiscale,
    bn: BatchNorm,
    pub head: Head,
}

#[derive(Clone, Debug)]
pub struct LidarBranch {
    pub convlstm: ConvLstm,
    pub saab: Option<Saab>,
    pub multiscale: Multiscale,
    pub head: Head,
}

#[derive(Clone, Debug)]
pub struct FusionNet {
    pub convlstm: ConvLstm,
    pub head: Head,
}

/// Class probabilities, named intermediate tensors and attention weights of
/// one forward pass. Tap and attention shapes include the batch axis.
#[derive(Clone, Debug, Default)]
pub struct Forward {
    pub p_hsi: Option<Var>,
    pub p_lidar: Option<Var>,
    pub p_fusion: Option<Var>,
    pub taps: Vec<(&'static str, Var)>,
    pub attention: Vec<(&'static str, Var)>,
}

impl Forward {
    pub fn tap(&self, name: &str) -> Option<Var> {
        self.taps.iter().find(|(n, _)| *n == name).map(|t| t.1)
    }

    pub fn probabilities(&self, route: Route) -> Option<Var> {
        match route {
            Route::Lidar => self.p_lidar,
            Route::Hsi => self.p_hsi,
            Route::Fused => self.p_fusion,
        }
    }
}

/// Per-head cross-entropies and the weighted total.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossParts {
    pub hsi: Option<Var>,
    pub lidar: Option<Var>,
    pub fusion: Option<Var>,
    pub total: Option<Var>,
}

/// Extremes of every attention distribution seen so far.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AttentionAudit {
    pub distributions: usize,
    pub min_weight: f64,
    pub max_sum_error: f64,
}

impl Default for AttentionAudit {
    fn default() -> Self {
        AttentionAudit {
            distributions: 0,
            min_weight: f64::INFINITY,
            max_sum_error: 0.0,
        }
    }
}

impl AttentionAudit {
    /// `weights` holds one distribution per batch item.
    pub fn observe(&mut self, weights: &Tensor) {
        let batch = weights.shape()[0];
        for row in weights.data().chunks(weights.len() / batch) {
            let sum: f64 = row.iter().sum();
            self.min_weight = row.iter().copied().fold(self.min_weight, f64::min);
            self.max_sum_error = self.max_sum_error.max((sum - 1.0).abs());
            self.distributions += 1;
        }
    }

    pub fn merge(&mut self, other: &AttentionAudit) {
        self.distributions += other.distributions;
        self.min_weight = self.min_weight.min(other.min_weight);
        self.max_sum_error = self.max_sum_error.max(other.max_sum_error);
    }

    pub fn holds(&self, tolerance: f64) -> bool {
        self.distributions == 0 || (self.min_weight >= 0.0 && self.max_sum_error <= tolerance)
    }
}

/// The dual-branch network with its parameters.
#[derive(Clone, Debug)]
pub struct Network {
    pub config: NetworkConfig,
    pub store: ParamStore,
    pub hsi: HsiBranch,
    pub lidar: LidarBranch,
    pub fusion: FusionNet,
}

impl Network {
    /// Builds and initializes from `config.seed`.
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let [m1, m2, m3] = c.feature_maps;
        let t = c.toggles;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let mut store = ParamStore::new();
        let (s, k) = (c.window, c.bands);
        let peep3 = [s, s, k];
        let peep2 = [s, s];

        let lidar = LidarBranch {
            convlstm: ConvLstm::new(
                &mut store,
                "lidar.convlstm",
                2,
                c.kernel,
                c.lidar_channels,
                m1,
                c.peephole.then_some(&peep2[..]),
                &mut rng,
            )?,
            saab: if t.saab {
                Some(Saab::new(&mut store, "lidar.saab", m1, c.attention_hidden, &mut rng)?)
            } else {
                None
            },
            multiscale: Multiscale::new(
                &mut store,
                "lidar",
                t.msrab,
                2,
                m1,
                m2,
                c.lidar_fusion_kernel,
                c.attention_hidden,
                &mut rng,
            )?,
            head: Head::new(&mut store, "lidar.head", m2, c.classes, &mut rng)?,
        };
        let hsi = HsiBranch {
            convlstm: ConvLstm::new(
                &mut store,
                "hsi.convlstm",
                3,
                c.kernel,
                1,
                m1,
                c.peephole.then_some(&peep3[..]),
                &mut rng,
            )?,
            seab: if t.seab {
                Some(Seab::new(&mut store, "hsi.seab", m1, c.attention_hidden, &mut rng)?)
            } else {
                None
            },
            multiscale: Multiscale::new(
                &mut store,
                "hsi",
                t.msrab,
                3,
                m1,
                m2,
                c.hsi_fusion_kernel,
                c.attention_hidden,
                &mut rng,
            )?,
            bn: BatchNorm::new(&mut store, "hsi.bn", m2)?,
            head: Head::new(&mut store, "hsi.head", m2, c.classes, &mut rng)?,
        };
        let fused_features = m3 + if t.reuse_lidar { m2 } else { 0 };
        let fusion = FusionNet {
            convlstm: ConvLstm::new(&mut store, "fusion.convlstm", 3, 1, m2, m3, None, &mut rng)?,
            head: Head::new(&mut store, "fusion.head", fused_features, c.classes, &mut rng)?,
        };
        Ok(Network {
            config,
            store,
            hsi,
            lidar,
            fusion,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_trainable_elements()
    }

    /// Trainable parameters updated when optimizing `route`.
    pub fn trainable(&self, route: Route) -> Vec<ParamId> {
        if route == Route::Fused && self.config.toggles.freeze_branches {
            return self.store.trainable_with_prefix(&["fusion."]);
        }
        self.store.trainable_with_prefix(route.prefixes())
    }

    fn check_inputs(&self, g: &Graph, hsi: Var, lidar: Var) -> Result<()> {
        let c = &self.config;
        let (s, k, cl) = (c.window, c.bands, c.lidar_channels);
        let (hs, ls) = (g.shape(hsi), g.shape(lidar));
        if hs.len() != 5 || hs[1..] != [s, s, k, 1] || ls.len() != 4 || ls[1..] != [s, s, cl] || hs[0] != ls[0] {
            return Err(Error::shape(
                "network",
                format!("hsi {hs:?} and lidar {ls:?}, expected [B, {s}, {s}, {k}, 1] and [B, {s}, {s}, {cl}]"),
            ));
        }
        Ok(())
    }

    /// `hsi [B, s, s, K, 1]`, `lidar [B, s, s, c_L]`.
    pub fn forward(&self, g: &mut Graph, hsi: Var, lidar: Var, route: Route) -> Result<Forward> {
        self.check_inputs(g, hsi, lidar)?;
        let c = &self.config;
        let b = g.shape(hsi)[0];
        let [_, m2, _] = c.feature_maps;
        let mut out = Forward::default();
        let mut spatial = None;
        let mut lidar_ms = None;
        let mut lidar_gap = None;

        if route != Route::Hsi {
            out.taps.push(("Input (LiDAR)", lidar));
            let br = &self.lidar;
            let mut x = br.convlstm.step(g, lidar, None)?.h;
            out.taps.push(("ConvLSTM2D", x));
            if let Some(saab) = &br.saab {
                let a = saab.forward(g, x)?;
                out.attention.push(("saab", a.weights));
                out.taps.push(("SaAB", a.enhanced));
                spatial = Some(a.weights);
                x = a.enhanced;
            }
            let x = g.max_pool(x, &[2, 2])?;
            out.taps.push(("MaxPooling2D", x));
            let mut shape = g.shape(x).to_vec();
            shape.insert(1, 1);
            let x = g.reshape(x, &shape)?;
            let (x, w) = br.multiscale.forward(g, x)?;
            if let Some(w) = w {
                out.attention.push(("lidar.msrab", w));
            }
            out.taps.push(("MSRAB(2D)", x));
            lidar_ms = Some(x);
            let d = g.dropout(x, c.dropout)?;
            let gap = g.mean_axes(d, &[1, 2, 3])?;
            out.taps.push(("GAP2D", gap));
            lidar_gap = Some(gap);
            let flat = g.reshape(gap, &[b, m2])?;
            out.p_lidar = Some(br.head.forward(g, flat)?);
        }
        if route == Route::Lidar {
            return Ok(out);
        }

        out.taps.push(("Input (HSI)", hsi));
        let br = &self.hsi;
        let mut x = br.convlstm.step(g, hsi, None)?.h;
        out.taps.push(("ConvLSTM3D", x));
        if let Some(seab) = &br.seab {
            let a = seab.forward(g, x)?;
            out.attention.push(("seab", a.weights));
            out.taps.push(("SeAB", a.enhanced));
            x = a.enhanced;
        }
        if route == Route::Fused && c.toggles.composite {
            if let Some(alpha) = spatial {
                x = composite_fuse(g, x, alpha)?;
                out.taps.push(("First-Level Fusion", x));
            }
        }
        let x = g.max_pool(x, &[2, 2, 2])?;
        out.taps.push(("MaxPooling3D", x));
        let mut shape = g.shape(x).to_vec();
        shape.insert(1, 1);
        let x = g.reshape(x, &shape)?;
        let (x, w) = br.multiscale.forward(g, x)?;
        if let Some(w) = w {
            out.attention.push(("hsi.msrab", w));
        }
        out.taps.push(("MSRAB(3D)", x));
        let x = g.batch_norm(x, br.bn.gamma, br.bn.beta, (br.bn.mean, br.bn.var))?;
        let hsi_ms = g.swish(x);
        let d = g.dropout(hsi_ms, c.dropout)?;
        let gap = g.mean_axes(d, &[1, 2, 3, 4])?;
        out.taps.push(("GAP3D (HSI)", gap));
        let flat = g.reshape(gap, &[b, m2])?;
        out.p_hsi = Some(br.head.forward(g, flat)?);
        if route == Route::Hsi {
            return Ok(out);
        }

        let (lidar_ms, lidar_gap) = (lidar_ms.expect("lidar ran"), lidar_gap.expect("lidar ran"));
        let mut shape = g.shape(lidar_ms).to_vec();
        shape.insert(4, 1);
        let lifted = g.reshape(lidar_ms, &shape)?;
        let cascaded = g.concat(&[hsi_ms, lifted], 4)?;
        let seq = unstack_time(g, cascaded)?;
        let fused = self.fusion.convlstm.forward(g, &seq, ReturnMode::All)?;
        out.taps.push(("Second-Level Fusion", fused));
        let d = g.dropout(fused, c.dropout)?;
        let mut feat = g.mean_axes(d, &[1, 2, 3, 4])?;
        out.taps.push(("GAP3D (fusion)", feat));
        if c.toggles.reuse_lidar {
            let lg = g.reshape(lidar_gap, &[b, 1, 1, 1, 1, m2])?;
            feat = g.concat(&[feat, lg], 5)?;
        }
        out.taps.push(("Third-Level Fusion", feat));
        let width = *g.shape(feat).last().expect("rank 6");
        let d = g.dropout(feat, c.dropout)?;
        let flat = g.reshape(d, &[b, width])?;
        out.p_fusion = Some(self.fusion.head.forward(g, flat)?);
        Ok(out)
    }

    /// Cross-entropies for `route`; the fused route weights the three heads
    /// by `loss_weights` and drops zero-weighted terms.
    pub fn loss(&self, g: &mut Graph, fwd: &Forward, labels: &[usize], route: Route) -> Result<LossParts> {
        let mut parts = LossParts::default();
        let ce = |g: &mut Graph, p: Option<Var>| p.map(|p| g.cross_entropy(p, labels)).transpose();
        match route {
            Route::Lidar => {
                parts.lidar = ce(g, fwd.p_lidar)?;
                parts.total = parts.lidar;
            }
            Route::Hsi => {
                parts.hsi = ce(g, fwd.p_hsi)?;
                parts.total = parts.hsi;
            }
            Route::Fused => {
                parts.hsi = ce(g, fwd.p_hsi)?;
                parts.lidar = ce(g, fwd.p_lidar)?;
                parts.fusion = ce(g, fwd.p_fusion)?;
                let [alpha, beta, gamma] = self.config.loss_weights;
                let mut total: Option<Var> = None;
                for (w, term) in [(alpha, parts.hsi), (beta, parts.lidar), (gamma, parts.fusion)] {
                    let Some(term) = term else { continue };
                    if w == 0.0 {
                        continue;
                    }
                    let t = g.scale(term, w);
                    total = Some(match total {
                        None => t,
                        Some(acc) => g.add(acc, t)?,
                    });
                }
                parts.total = total;
            }
        }
        if parts.total.is_none() {
            return Err(Error::invalid("every loss weight is zero"));
        }
        Ok(parts)
    }

    /// Class probabilities `[n, N]` in inference mode.
    pub fn probabilities(&self, set: &PatchSet, route: Route) -> Result<Tensor> {
        if set.is_empty() {
            return Err(Error::invalid("empty patch set"));
        }
        let n = self.config.classes;
        let mut data = Vec::with_capacity(set.len() * n);
        let idx: Vec<usize> = (0..set.len()).collect();
        for chunk in idx.chunks(self.config.batch_size) {
            let (h, l, _) = set.batch(chunk)?;
            let mut g = Graph::new(&self.store, Mode::Infer, 0);
            let (hv, lv) = (g.input(h), g.input(l));
            let fwd = self.forward(&mut g, hv, lv, route)?;
            let p = fwd.probabilities(route).expect("route head");
            data.extend_from_slice(g.value(p).data());
        }
        Tensor::new(vec![set.len(), n], data)
    }

    /// Argmax classes, 1-based.
    pub fn predict(&self, set: &PatchSet, route: Route) -> Result<Vec<usize>> {
        let p = self.probabilities(set, route)?;
        let n = self.config.classes;
        Ok(p.data()
            .chunks(n)
            .map(|row| {
                1 + row
                    .iter()
                    .enumerate()
                    .fold(0, |best, (i, &v)| if v > row[best] { i } else { best })
            })
            .collect())
    }
}
