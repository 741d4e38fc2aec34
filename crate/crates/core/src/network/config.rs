use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Structural and training switches. Every switch defaults to on except
/// `freeze_branches`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toggles {
    pub seab: bool,
    pub saab: bool,
    pub msrab: bool,
    pub composite: bool,
    pub stepwise: bool,
    pub reuse_lidar: bool,
    /// Phase 3 updates only the fusion layers.
    pub freeze_branches: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Toggles {
            seab: true,
            saab: true,
            msrab: true,
            composite: true,
            stepwise: true,
            reuse_lidar: true,
            freeze_branches: false,
        }
    }
}

impl Toggles {
    /// Names accepted by [`Toggles::set`], in ablation-table order.
    pub const ABLATABLE: [&'static str; 5] = ["seab", "saab", "msrab", "composite", "stepwise"];

    pub fn set(&mut self, name: &str, on: bool) -> Result<()> {
        let slot = match name {
            "seab" => &mut self.seab,
            "saab" => &mut self.saab,
            "msrab" => &mut self.msrab,
            "composite" => &mut self.composite,
            "stepwise" => &mut self.stepwise,
            "reuse_lidar" => &mut self.reuse_lidar,
            "freeze_branches" => &mut self.freeze_branches,
            other => return Err(Error::invalid(format!("unknown toggle {other:?}"))),
        };
        *slot = on;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<bool> {
        Ok(match name {
            "seab" => self.seab,
            "saab" => self.saab,
            "msrab" => self.msrab,
            "composite" => self.composite,
            "stepwise" => self.stepwise,
            "reuse_lidar" => self.reuse_lidar,
            "freeze_branches" => self.freeze_branches,
            other => return Err(Error::invalid(format!("unknown toggle {other:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub classes: usize,
    /// Odd patch side `s`.
    pub window: usize,
    /// Principal components `K`.
    pub bands: usize,
    pub lidar_channels: usize,
    /// Kernel of the first ConvLSTM layer in each branch.
    pub kernel: usize,
    /// `[m1, m2, m3]`.
    pub feature_maps: [usize; 3],
    /// Kernel `a` of the fusion ConvLSTM inside the HSI and LiDAR MSRAB.
    pub hsi_fusion_kernel: usize,
    pub lidar_fusion_kernel: usize,
    /// Hidden width of the 3x3 attention ConvLSTM layers.
    pub attention_hidden: usize,
    pub dropout: f64,
    pub lr_hsi: f64,
    pub lr_lidar: f64,
    pub lr: f64,
    /// `[N_step1 (LiDAR), N_step2 (HSI), N_steps (fusion)]`.
    pub epochs: [usize; 3],
    pub batch_size: usize,
    /// `[α, β, γ]` weighting the HSI, LiDAR and fusion cross-entropies.
    pub loss_weights: [f64; 3],
    pub peephole: bool,
    pub toggles: Toggles,
    pub seed: u64,
    /// Ends a phase once its training OA (percent) reaches this value and,
    /// if `target_loss` is also set, that target is met too.
    pub target_train_oa: Option<f64>,
    /// Ends a phase once the epoch loss of its own head falls to this value.
    pub target_loss: Option<f64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig::houston()
    }
}

impl NetworkConfig {
    pub fn houston() -> Self {
        NetworkConfig {
            classes: 15,
            window: 13,
            bands: 10,
            lidar_channels: 1,
            kernel: 3,
            feature_maps: [32, 64, 128],
            hsi_fusion_kernel: 4,
            lidar_fusion_kernel: 3,
            attention_hidden: 8,
            dropout: 0.5,
            lr_hsi: 1e-4,
            lr_lidar: 1e-3,
            lr: 1e-4,
            epochs: [500, 500, 1200],
            batch_size: 32,
            loss_weights: [1.0; 3],
            peephole: false,
            toggles: Toggles::default(),
            seed: 0,
            target_train_oa: None,
            target_loss: None,
        }
    }

    pub fn trento() -> Self {
        NetworkConfig {
            classes: 6,
            window: 11,
            lidar_channels: 2,
            feature_maps: [16, 32, 64],
            lr_hsi: 1e-3,
            lr_lidar: 5e-4,
            lr: 1e-4,
            ..NetworkConfig::houston()
        }
    }

    /// Desk-scale preset matching the synthetic generator defaults.
    pub fn synthetic() -> Self {
        NetworkConfig {
            classes: 3,
            window: 9,
            bands: 5,
            lidar_channels: 1,
            feature_maps: [8, 16, 32],
            hsi_fusion_kernel: 3,
            attention_hidden: 4,
            dropout: 0.1,
            lr_hsi: 3e-3,
            lr_lidar: 3e-3,
            lr: 3e-3,
            epochs: [10, 10, 300],
            batch_size: 8,
            ..NetworkConfig::houston()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "houston" => Ok(Self::houston()),
            "trento" => Ok(Self::trento()),
            "synthetic" => Ok(Self::synthetic()),
            other => Err(Error::invalid(format!("unknown preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.window.is_multiple_of(2) || self.window < self.kernel {
            return bad(format!(
                "window {} must be odd and at least kernel {}",
                self.window, self.kernel
            ));
        }
        if self.classes < 2 {
            return bad(format!("{} classes, need at least 2", self.classes));
        }
        if self.bands == 0 || self.lidar_channels == 0 || self.kernel == 0 {
            return bad("bands, lidar_channels and kernel must be positive".into());
        }
        if self.feature_maps.contains(&0) || self.attention_hidden == 0 {
            return bad(format!("feature maps {:?}", self.feature_maps));
        }
        if self.hsi_fusion_kernel == 0 || self.lidar_fusion_kernel == 0 {
            return bad("fusion kernels must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        for (name, lr) in [("lr_hsi", self.lr_hsi), ("lr_lidar", self.lr_lidar), ("lr", self.lr)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad(format!("{name} = {lr}"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.loss_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad(format!("loss weights {:?}", self.loss_weights));
        }
        Ok(())
    }

    /// Spatial extent after the 2x pooling.
    pub fn pooled_window(&self) -> usize {
        self.window.div_ceil(2)
    }

    pub fn pooled_bands(&self) -> usize {
        self.bands.div_ceil(2)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: NetworkConfig = toml::from_str(text).map_err(|e| Error::invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
