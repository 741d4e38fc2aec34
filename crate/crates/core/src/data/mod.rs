//! Scenes, patch sets, preprocessing, synthetic data, metrics and file formats.

pub mod io;
mod manifest;
mod metrics;
mod normalize;
mod patches;
mod pca;
mod ppm;
mod split;
mod synth;

pub use io::{load_tensor, save_tensor, save_tensor_as, Dtype};
pub use manifest::{load_scene, Manifest};
pub use metrics::{compute_metrics, MetricsReport};
pub use normalize::{normalize, normalize_bands, NormalizeMode};
pub use patches::extract_patches;
pub use pca::{pca_reduce, Pca};
pub use ppm::{default_palette, parse_ppm, write_classification_map};
pub use split::{split, SplitSpec};
pub use synth::{synth_generate, SynthSpec};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Co-registered HSI and LiDAR rasters with a label grid (0 = unlabeled).
#[derive(Clone, Debug)]
pub struct SceneCube {
    /// `[W, H, D]`.
    pub hsi: Tensor,
    /// `[W, H, c_L]`.
    pub lidar: Tensor,
    /// Row-major `W x H`.
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl SceneCube {
    pub fn new(hsi: Tensor, lidar: Tensor, labels: &Tensor, classes: usize) -> Result<Self> {
        let lidar = match lidar.rank() {
            2 => {
                let mut s = lidar.shape().to_vec();
                s.push(1);
                lidar.into_reshape(&s)?
            }
            _ => lidar,
        };
        if hsi.rank() != 3 || lidar.rank() != 3 || labels.rank() != 2 {
            return Err(Error::shape(
                "scene",
                format!(
                    "hsi {:?}, lidar {:?}, labels {:?}",
                    hsi.shape(),
                    lidar.shape(),
                    labels.shape()
                ),
            ));
        }
        if hsi.shape()[..2] != lidar.shape()[..2] || hsi.shape()[..2] != *labels.shape() {
            return Err(Error::shape(
                "scene",
                format!(
                    "extents differ: hsi {:?}, lidar {:?}, labels {:?}",
                    hsi.shape(),
                    lidar.shape(),
                    labels.shape()
                ),
            ));
        }
        let mut grid = Vec::with_capacity(labels.len());
        for &v in labels.data() {
            if v.fract() != 0.0 || v < 0.0 || v > classes as f64 {
                return Err(Error::invalid(format!("label value {v} outside 0..={classes}")));
            }
            grid.push(v as usize);
        }
        Ok(SceneCube {
            hsi,
            lidar,
            labels: grid,
            classes,
        })
    }

    pub fn width(&self) -> usize {
        self.hsi.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.hsi.shape()[1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `[s, s, K, 1]`.
    pub hsi: Tensor,
    /// `[s, s, c_L]`.
    pub lidar: Tensor,
    /// 1-based class.
    pub label: usize,
    /// (x, y) position in the scene grid.
    pub coord: (usize, usize),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PatchSet {
    pub window: usize,
    pub bands: usize,
    pub lidar_channels: usize,
    pub samples: Vec<Sample>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for s in &self.samples {
            counts[s.label - 1] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> PatchSet {
        PatchSet {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            ..self.empty_like()
        }
    }

    pub(crate) fn empty_like(&self) -> PatchSet {
        PatchSet {
            window: self.window,
            bands: self.bands,
            lidar_channels: self.lidar_channels,
            samples: Vec::new(),
        }
    }

    /// Stacks the chosen samples: HSI `[B, s, s, K, 1]`, LiDAR `[B, s, s, c_L]`,
    /// and 0-based labels.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor, Vec<usize>)> {
        if indices.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let (s, k, cl) = (self.window, self.bands, self.lidar_channels);
        let mut h = Vec::with_capacity(indices.len() * s * s * k);
        let mut l = Vec::with_capacity(indices.len() * s * s * cl);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            let smp = &self.samples[i];
            h.extend_from_slice(smp.hsi.data());
            l.extend_from_slice(smp.lidar.data());
            y.push(smp.label - 1);
        }
        let b = indices.len();
        Ok((
            Tensor::new(vec![b, s, s, k, 1], h)?,
            Tensor::new(vec![b, s, s, cl], l)?,
            y,
        ))
    }
}
