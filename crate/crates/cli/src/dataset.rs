use anyhow::{bail, Context, Result};
use hsfusion_core::data::{extract_patches, load_scene, normalize, pca_reduce, split, synth_generate, SplitSpec};
use hsfusion_core::PatchSet;

use crate::config::RunConfig;

pub struct Dataset {
    pub train: PatchSet,
    pub test: PatchSet,
    pub classes: usize,
    /// Map extent; sample `coord` is `(row, col)`.
    pub rows: usize,
    pub cols: usize,
}

impl Dataset {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        if cfg.synthetic {
            let (train, test) = synth_generate(&cfg.synth)?;
            let (rows, cols) = train
                .samples
                .iter()
                .chain(&test.samples)
                .fold((0, 0), |(r, c), s| (r.max(s.coord.0 + 1), c.max(s.coord.1 + 1)));
            return Ok(Dataset {
                train,
                test,
                classes: cfg.synth.classes,
                rows,
                cols,
            });
        }
        let Some(path) = &cfg.manifest else {
            bail!("no data source: pass --manifest PATH or --synthetic");
        };
        let scene = load_scene(path).with_context(|| format!("loading scene from {}", path.display()))?;
        let net = &cfg.network;
        if scene.classes != net.classes {
            bail!(
                "manifest declares {} classes but the network has {}",
                scene.classes,
                net.classes
            );
        }
        if scene.lidar.shape()[2] != net.lidar_channels {
            bail!(
                "LiDAR raster has {} channels but the network expects {}",
                scene.lidar.shape()[2],
                net.lidar_channels
            );
        }
        let scene = normalize(&scene, cfg.normalize);
        let (reduced, _) = pca_reduce(&scene.hsi, net.bands)?;
        let patches = extract_patches(&scene, net.window, &reduced)?;
        let spec = match cfg.train_per_class {
            Some(n) => SplitSpec::PerClass(vec![n; net.classes]),
            None => SplitSpec::Fraction(cfg.train_fraction),
        };
        let (train, test) = split(&patches, &spec, net.classes, net.seed)?;
        Ok(Dataset {
            train,
            test,
            classes: net.classes,
            rows: scene.width(),
            cols: scene.height(),
        })
    }
}
