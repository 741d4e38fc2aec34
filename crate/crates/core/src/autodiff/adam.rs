use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// ADAM with bias correction. Moments are allocated lazily per parameter.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: HashMap<ParamId, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, id: ParamId) -> Option<(&Tensor, &Tensor)> {
        self.moments.get(&id).map(|(m, v)| (m, v))
    }

    /// One update of `params`; parameters absent from `grads` see a zero gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, params: &[ParamId]) -> Result<()> {
        if self.config.lr.is_nan() || self.config.lr < 0.0 {
            return Err(Error::invalid(format!("learning rate {}", self.config.lr)));
        }
        for &id in params {
            if let Some(g) = grads.get_ref(id) {
                if g.shape() != store.get(id).shape() {
                    return Err(Error::shape(
                        "adam_step",
                        format!(
                            "{}: gradient {:?} vs parameter {:?}",
                            store.name(id),
                            g.shape(),
                            store.get(id).shape()
                        ),
                    ));
                }
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for &id in params {
            let p = store.get_mut(id);
            let (m, v) = self
                .moments
                .entry(id)
                .or_insert_with(|| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape())));
            let g = grads.get_ref(id);
            let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                let gi = g.map_or(0.0, |g| g.data()[i]);
                md[i] = beta1 * md[i] + (1.0 - beta1) * gi;
                vd[i] = beta2 * vd[i] + (1.0 - beta2) * gi * gi;
                let mhat = md[i] / c1;
                let vhat = vd[i] / c2;
                pd[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
