use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hsfusion_core::data::{NormalizeMode, SynthSpec};
use hsfusion_core::NetworkConfig;
use serde::{Deserialize, Serialize};

use crate::args::{Common, Format};

/// Everything a run needs. Written to `config.toml` in the output directory
/// after flags are merged, so the echo alone reproduces the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub manifest: Option<PathBuf>,
    pub synthetic: bool,
    pub out: PathBuf,
    pub format: Format,
    /// Fraction of each class drawn for training from a scene.
    pub train_fraction: f64,
    /// Fixed training count per class; overrides `train_fraction`.
    pub train_per_class: Option<usize>,
    pub normalize: NormalizeMode,
    pub synth: SynthSpec,
    pub network: NetworkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            manifest: None,
            synthetic: false,
            out: PathBuf::from("run"),
            format: Format::Text,
            train_fraction: 0.1,
            train_per_class: None,
            normalize: NormalizeMode::PerBandMinmax,
            synth: SynthSpec::default(),
            network: NetworkConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(command: &str, common: &Common) -> Result<Self> {
        let mut cfg = match &common.config {
            Some(path) => RunConfig::load(path)?,
            None if common.synthetic => RunConfig {
                synthetic: true,
                network: NetworkConfig::synthetic(),
                ..RunConfig::default()
            },
            None => RunConfig::default(),
        };
        cfg.command = command.to_string();
        if common.synthetic {
            cfg.synthetic = true;
        }
        if let Some(m) = &common.manifest {
            cfg.manifest = Some(m.clone());
            cfg.synthetic = false;
        }
        if let Some(out) = &common.out {
            cfg.out = out.clone();
        }
        if let Some(f) = common.format {
            cfg.format = f;
        }
        let net = &mut cfg.network;
        if let Some(n) = common.classes {
            net.classes = n;
        }
        if let Some(s) = common.window {
            net.window = s;
        }
        if let Some(k) = common.pca {
            net.bands = k;
        }
        if let Some(seed) = common.seed {
            net.seed = seed;
            cfg.synth.seed = seed;
        }
        if let Some(e) = &common.epochs {
            net.epochs = triple(e, "--epochs")?;
        }
        if let Some(lr) = &common.lr {
            [net.lr_lidar, net.lr_hsi, net.lr] = triple(lr, "--lr")?;
        }
        if let Some(t) = common.target_oa {
            net.target_train_oa = Some(t);
        }
        if let Some(t) = common.target_loss {
            net.target_loss = Some(t);
        }
        if let Some(list) = &common.toggles {
            if command != "ablate" {
                for (name, on) in parse_toggle_settings(list)? {
                    net.toggles.set(&name, on)?;
                }
            }
        }
        if cfg.synthetic {
            cfg.synth.classes = net.classes;
            cfg.synth.window = net.window;
            cfg.synth.bands = net.bands;
            cfg.synth.lidar_channels = net.lidar_channels;
        } else if cfg.manifest.is_none() && command != "gradcheck" {
            bail!("no data source: pass --manifest PATH or --synthetic");
        }
        if !(0.0..=1.0).contains(&cfg.train_fraction) {
            bail!("train_fraction {} outside [0, 1]", cfg.train_fraction);
        }
        cfg.network.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

/// `a,b,c` or a single value repeated three times.
fn triple<T: Copy + std::str::FromStr>(text: &str, flag: &str) -> Result<[T; 3]> {
    let parts: Vec<T> = text
        .split(',')
        .map(|p| p.trim().parse::<T>().ok())
        .collect::<Option<_>>()
        .with_context(|| format!("{flag} {text:?}: expected one or three comma-separated numbers"))?;
    match parts[..] {
        [v] => Ok([v; 3]),
        [a, b, c] => Ok([a, b, c]),
        _ => bail!("{flag} {text:?}: expected one or three comma-separated numbers"),
    }
}

/// `name`, `+name`, `name=on` switch a toggle on; `-name`, `name=off` switch it off.
pub fn parse_toggle_settings(list: &str) -> Result<Vec<(String, bool)>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (name, on) = if let Some((n, v)) = item.split_once('=') {
                let on = match v {
                    "on" | "true" | "1" => true,
                    "off" | "false" | "0" => false,
                    _ => bail!("toggle value {v:?} for {n}: expected on or off"),
                };
                (n, on)
            } else if let Some(n) = item.strip_prefix('-') {
                (n, false)
            } else {
                (item.strip_prefix('+').unwrap_or(item), true)
            };
            Ok((name.to_string(), on))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triples() {
        assert_eq!(triple::<usize>("4", "e").unwrap(), [4, 4, 4]);
        assert_eq!(triple::<f64>("1e-3, 2e-3,3e-3", "e").unwrap(), [1e-3, 2e-3, 3e-3]);
        assert!(triple::<usize>("1,2", "e").is_err());
        assert!(triple::<usize>("x", "e").is_err());
    }

    #[test]
    fn toggle_settings() {
        let t = parse_toggle_settings("seab,-saab,msrab=off,+stepwise").unwrap();
        assert_eq!(
            t,
            vec![
                ("seab".into(), true),
                ("saab".into(), false),
                ("msrab".into(), false),
                ("stepwise".into(), true)
            ]
        );
        assert!(parse_toggle_settings("seab=maybe").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig {
            synthetic: true,
            train_per_class: Some(7),
            ..RunConfig::default()
        };
        assert_eq!(toml::from_str::<RunConfig>(&cfg.to_toml()).unwrap(), cfg);
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }
}
