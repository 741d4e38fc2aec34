//! Finite-difference checks over every layer and block, on small random
//! instances.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{composite_fuse, Msrab, Saab, Seab};
use crate::autodiff::{finite_diff_check, GradCheckOptions, GradCheckReport, Graph, ParamStore, Var};
use crate::convlstm::{ConvLstm, ReturnMode};
use crate::data::{synth_generate, SynthSpec};
use crate::error::{Error, Result};
use crate::network::{Network, NetworkConfig, Route};
use crate::tensor::{ConvSpec, Tensor};

pub const COMPONENTS: [&str; 14] = [
    "conv2d",
    "conv3d",
    "batchnorm",
    "convlstm2d",
    "convlstm3d",
    "seab",
    "saab",
    "msrab2d",
    "msrab3d",
    "composite",
    "lidar_head",
    "hsi_head",
    "fusion_head",
    "network",
];

#[derive(Clone, Debug)]
pub struct ComponentCheck {
    pub component: &'static str,
    pub report: GradCheckReport,
}

impl ComponentCheck {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn randn(shape: &[usize], seed: u64) -> Tensor {
    Tensor::random_normal(shape, 1.0, &mut rng(seed))
}

/// Random projection of `y` to a scalar, so every output element matters.
fn project(g: &mut Graph, y: Var) -> Result<Var> {
    let r = g.input(randn(g.shape(y), 977));
    let p = g.mul(y, r)?;
    Ok(g.sum(p))
}

fn block(
    store: &ParamStore,
    x: &Tensor,
    opts: &GradCheckOptions,
    f: impl Fn(&mut Graph, Var) -> Result<Var>,
) -> Result<GradCheckReport> {
    finite_diff_check(
        store,
        |g| {
            let xv = g.input(x.clone());
            let y = f(g, xv)?;
            project(g, y)
        },
        opts,
    )
}

fn conv(rank: usize, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let k = if rank == 2 { vec![3, 2] } else { vec![3, 2, 3] };
    let spec = ConvSpec::same(&k, 2, 3);
    let w = store.add("w", randn(&spec.weight_shape(), 1).scale(0.5), true)?;
    let b = store.add("b", randn(&[3], 2), true)?;
    let mut shape = vec![2; 1];
    shape.extend(vec![4; rank]);
    shape.push(2);
    block(&store, &randn(&shape, 3), opts, |g, x| {
        let (wv, bv) = (g.param(w), g.param(b));
        g.conv(x, wv, Some(bv), &spec)
    })
}

fn batchnorm(opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let gamma = store.add("gamma", randn(&[3], 1), true)?;
    let beta = store.add("beta", randn(&[3], 2), true)?;
    let mean = store.add("mean", Tensor::zeros(&[3]), false)?;
    let var = store.add("var", Tensor::full(&[3], 1.0), false)?;
    block(&store, &randn(&[3, 2, 2, 2, 3], 3), opts, |g, x| {
        let y = g.batch_norm(x, gamma, beta, (mean, var))?;
        Ok(g.swish(y))
    })
}

fn convlstm(rank: usize, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let ext = vec![3; rank];
    let layer = ConvLstm::new(&mut store, "cell", rank, 3, 2, 2, Some(&ext), &mut rng(4))?;
    for (k, id) in layer.params().into_iter().enumerate() {
        if store.name(id).contains("peep") {
            let shape = store.get(id).shape().to_vec();
            store.set(id, randn(&shape, 20 + k as u64).scale(0.5))?;
        }
    }
    let mut shape = vec![2];
    shape.extend(&ext);
    shape.push(2);
    let (x0, x1) = (randn(&shape, 5), randn(&shape, 6));
    finite_diff_check(
        &store,
        |g| {
            let (a, b) = (g.input(x0.clone()), g.input(x1.clone()));
            let h = layer.forward(g, &[a, b], ReturnMode::All)?;
            project(g, h)
        },
        opts,
    )
}

fn msrab(rank: usize, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let blk = Msrab::new(&mut store, "msrab", rank, 2, 3, 2, 2, &mut rng(7))?;
    let mut shape = vec![1, 2];
    shape.extend(vec![3; rank]);
    shape.push(2);
    block(&store, &randn(&shape, 8), opts, |g, x| Ok(blk.forward(g, x)?.output))
}

fn network(component: &str, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let cfg = NetworkConfig {
        classes: 3,
        window: 5,
        bands: 3,
        lidar_channels: 2,
        feature_maps: [2, 3, 4],
        attention_hidden: 2,
        hsi_fusion_kernel: 2,
        lidar_fusion_kernel: 3,
        dropout: 0.2,
        ..NetworkConfig::synthetic()
    };
    let (set, _) = synth_generate(&SynthSpec {
        classes: 3,
        window: 5,
        bands: 3,
        lidar_channels: 2,
        train_per_class: 1,
        test_per_class: 1,
        noise: 0.1,
        seed: 9,
    })?;
    let net = Network::new(cfg)?;
    let (h, l, y) = set.batch(&[0, 1, 2])?;
    let (route, prefixes, max_elements) = match component {
        "lidar_head" => (Route::Lidar, vec!["lidar.head".to_string()], None),
        "hsi_head" => (Route::Hsi, vec!["hsi.head".to_string()], None),
        "fusion_head" => (Route::Fused, vec!["fusion.".to_string()], None),
        _ => (Route::Fused, Vec::new(), Some(2)),
    };
    let opts = GradCheckOptions {
        prefixes,
        max_elements,
        ..opts.clone()
    };
    finite_diff_check(
        &net.store,
        |g| {
            let (hv, lv) = (g.input(h.clone()), g.input(l.clone()));
            let fwd = net.forward(g, hv, lv, route)?;
            Ok(net.loss(g, &fwd, &y, route)?.total.expect("loss has a term"))
        },
        &opts,
    )
}

/// Checks one named component.
pub fn check_component(component: &str, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    match component {
        "conv2d" => conv(2, opts),
        "conv3d" => conv(3, opts),
        "batchnorm" => batchnorm(opts),
        "convlstm2d" => convlstm(2, opts),
        "convlstm3d" => convlstm(3, opts),
        "seab" => {
            let mut store = ParamStore::new();
            let blk = Seab::new(&mut store, "seab", 2, 2, &mut rng(10))?;
            block(&store, &randn(&[1, 4, 4, 4, 2], 11), opts, |g, x| {
                Ok(blk.forward(g, x)?.enhanced)
            })
        }
        "saab" => {
            let mut store = ParamStore::new();
            let blk = Saab::new(&mut store, "saab", 2, 2, &mut rng(12))?;
            block(&store, &randn(&[2, 4, 4, 2], 13), opts, |g, x| {
                Ok(blk.forward(g, x)?.enhanced)
            })
        }
        "msrab2d" => msrab(2, opts),
        "msrab3d" => msrab(3, opts),
        "composite" => {
            let mut store = ParamStore::new();
            let blk = Saab::new(&mut store, "saab", 2, 2, &mut rng(14))?;
            let feats = randn(&[2, 4, 4, 3, 2], 15);
            block(&store, &randn(&[2, 4, 4, 2], 16), opts, |g, x| {
                let att = blk.forward(g, x)?;
                let f = g.input(feats.clone());
                composite_fuse(g, f, att.weights)
            })
        }
        "lidar_head" | "hsi_head" | "fusion_head" | "network" => network(component, opts),
        other => Err(Error::invalid(format!(
            "unknown component {other:?}; expected one of {}",
            COMPONENTS.join(", ")
        ))),
    }
}

/// Runs `components` (all when `None`) in order.
pub fn gradcheck_suite(components: Option<&[String]>, opts: &GradCheckOptions) -> Result<Vec<ComponentCheck>> {
    let chosen: Vec<&'static str> = match components {
        None => COMPONENTS.to_vec(),
        Some(names) => names
            .iter()
            .map(|n| {
                COMPONENTS.iter().copied().find(|c| c == n).ok_or_else(|| {
                    Error::invalid(format!(
                        "unknown component {n:?}; expected one of {}",
                        COMPONENTS.join(", ")
                    ))
                })
            })
            .collect::<Result<_>>()?,
    };
    chosen
        .into_iter()
        .map(|c| {
            Ok(ComponentCheck {
                component: c,
                report: check_component(c, opts)?,
            })
        })
        .collect()
}
