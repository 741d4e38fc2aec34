use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::model::{AttentionAudit, Network, Route};
use crate::autodiff::{apply_bn_updates, Adam, AdamConfig, Graph};
use crate::data::PatchSet;
use crate::error::{Error, Result};
use crate::tensor::Mode;

/// One row per epoch. Losses are epoch means over batches; heads that the
/// phase does not evaluate are `None`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistoryRow {
    pub phase: u8,
    pub epoch: usize,
    pub loss_hsi: Option<f64>,
    pub loss_lidar: Option<f64>,
    pub loss_fusion: Option<f64>,
    /// Inference-mode accuracy (percent) of the phase's head on the training set.
    pub train_oa: f64,
}

impl HistoryRow {
    pub const CSV_HEADER: &'static str = "phase,epoch,loss_H,loss_L,loss_F,train_OA";

    pub fn csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.10}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{:.6}",
            self.phase,
            self.epoch,
            f(self.loss_hsi),
            f(self.loss_lidar),
            f(self.loss_fusion),
            self.train_oa
        )
    }

    /// Loss of the head the phase trains: LiDAR, HSI, then fusion.
    pub fn head_loss(&self) -> Option<f64> {
        match self.phase {
            1 => self.loss_lidar,
            2 => self.loss_hsi,
            _ => self.loss_fusion,
        }
    }

    /// Weighted loss the phase optimized.
    pub fn total_loss(&self, weights: [f64; 3]) -> f64 {
        match self.phase {
            1 => self.loss_lidar.unwrap_or(f64::NAN),
            2 => self.loss_hsi.unwrap_or(f64::NAN),
            _ => [self.loss_hsi, self.loss_lidar, self.loss_fusion]
                .iter()
                .zip(weights)
                .filter(|(_, w)| *w != 0.0)
                .map(|(l, w)| w * l.unwrap_or(f64::NAN))
                .sum(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TrainReport {
    pub history: Vec<HistoryRow>,
    pub audit: AttentionAudit,
}

impl TrainReport {
    pub fn phase(&self, phase: u8) -> impl Iterator<Item = &HistoryRow> {
        self.history.iter().filter(move |r| r.phase == phase)
    }

    pub fn final_train_oa(&self) -> Option<f64> {
        self.history.last().map(|r| r.train_oa)
    }
}

/// Progress reported by [`train`].
#[derive(Clone, Copy, Debug)]
pub enum TrainEvent<'a> {
    Epoch(&'a HistoryRow),
    /// Emitted after every phase, including phases with zero epochs.
    PhaseEnd {
        phase: u8,
        route: Route,
        net: &'a Network,
        train_oa: f64,
    },
}

/// Phase number, route and learning rate for each optimization stage.
pub fn phases(net: &Network) -> Vec<(u8, Route, f64, usize)> {
    let c = &net.config;
    let mut out = Vec::new();
    if c.toggles.stepwise {
        out.push((1, Route::Lidar, c.lr_lidar, c.epochs[0]));
        out.push((2, Route::Hsi, c.lr_hsi, c.epochs[1]));
    }
    out.push((3, Route::Fused, c.lr, c.epochs[2]));
    out
}

/// Stepwise training: LiDAR branch, then HSI branch, then every parameter
/// under the weighted multi-task loss. Without the stepwise toggle only the
/// last phase runs, from the initial weights. An error from `observe` aborts
/// training.
pub fn train(
    net: &mut Network,
    set: &PatchSet,
    mut observe: impl FnMut(TrainEvent) -> Result<()>,
) -> Result<TrainReport> {
    if set.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let c = net.config.clone();
    if set.window != c.window || set.bands != c.bands || set.lidar_channels != c.lidar_channels {
        return Err(Error::shape(
            "train",
            format!(
                "patches s={} K={} c_L={} against config s={} K={} c_L={}",
                set.window, set.bands, set.lidar_channels, c.window, c.bands, c.lidar_channels
            ),
        ));
    }
    let mut report = TrainReport::default();
    let labels = set.labels();
    for (phase, route, lr, epochs) in phases(net) {
        let ids = net.trainable(route);
        let owned: Vec<&str> = if route == Route::Fused && c.toggles.freeze_branches {
            vec!["fusion."]
        } else {
            route.prefixes().to_vec()
        };
        let mut adam = Adam::new(AdamConfig::with_lr(lr));
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        rng.set_stream(phase as u64);
        let mut order: Vec<usize> = (0..set.len()).collect();
        let mut last_oa = None;
        for epoch in 1..=epochs {
            order.shuffle(&mut rng);
            let mut sums = [0.0; 3];
            for chunk in order.chunks(c.batch_size) {
                let (h, l, y) = set.batch(chunk)?;
                let (grads, updates, parts) = {
                    let mut g = Graph::new(&net.store, Mode::Train, rng.gen());
                    let (hv, lv) = (g.input(h), g.input(l));
                    let fwd = net.forward(&mut g, hv, lv, route)?;
                    for (_, w) in &fwd.attention {
                        report.audit.observe(g.value(*w));
                    }
                    let parts = net.loss(&mut g, &fwd, &y, route)?;
                    let total = parts.total.expect("loss has a term");
                    let value = g.value(total).item();
                    if !value.is_finite() {
                        return Err(Error::NonFinite {
                            phase,
                            epoch,
                            detail: format!("batch loss {value}"),
                        });
                    }
                    let grads = g.backward(total)?;
                    let read = |v: Option<_>| v.map(|v| g.value(v).item()).unwrap_or(0.0);
                    (
                        grads,
                        g.bn_updates().to_vec(),
                        [read(parts.hsi), read(parts.lidar), read(parts.fusion)],
                    )
                };
                adam.step(&mut net.store, &grads, &ids)?;
                let updates: Vec<_> = updates
                    .into_iter()
                    .filter(|u| owned.iter().any(|p| net.store.name(u.mean).starts_with(p)))
                    .collect();
                apply_bn_updates(&mut net.store, &updates);
                for (s, v) in sums.iter_mut().zip(parts) {
                    *s += v * chunk.len() as f64;
                }
            }
            let n = set.len() as f64;
            let mean = |i: usize, used: bool| used.then(|| sums[i] / n);
            let row = HistoryRow {
                phase,
                epoch,
                loss_hsi: mean(0, route != Route::Lidar),
                loss_lidar: mean(1, route != Route::Hsi),
                loss_fusion: mean(2, route == Route::Fused),
                train_oa: accuracy(net, set, &labels, route)?,
            };
            observe(TrainEvent::Epoch(&row))?;
            last_oa = Some(row.train_oa);
            let done = (c.target_train_oa.is_some() || c.target_loss.is_some())
                && c.target_train_oa.is_none_or(|t| row.train_oa >= t)
                && c.target_loss.is_none_or(|t| row.head_loss().is_some_and(|l| l <= t));
            report.history.push(row);
            if done {
                break;
            }
        }
        let train_oa = match last_oa {
            Some(oa) => oa,
            None => accuracy(net, set, &labels, route)?,
        };
        observe(TrainEvent::PhaseEnd {
            phase,
            route,
            net,
            train_oa,
        })?;
    }
    Ok(report)
}

fn accuracy(net: &Network, set: &PatchSet, labels: &[usize], route: Route) -> Result<f64> {
    let pred = net.predict(set, route)?;
    let correct = pred.iter().zip(labels).filter(|(p, t)| p == t).count();
    Ok(100.0 * correct as f64 / set.len() as f64)
}
