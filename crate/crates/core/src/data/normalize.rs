use serde::{Deserialize, Serialize};

use super::SceneCube;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMode {
    PerBandMinmax,
    PerBandStandard,
}

/// Rescales each band (last axis) independently. Constant bands become 0.
pub fn normalize_bands(t: &Tensor, mode: NormalizeMode) -> Tensor {
    let d = *t.shape().last().unwrap_or(&1);
    let n = (t.len() / d) as f64;
    let mut out = t.clone();
    for b in 0..d {
        let band = || t.data().iter().skip(b).step_by(d).copied();
        let (shift, scale) = match mode {
            NormalizeMode::PerBandMinmax => {
                let lo = band().fold(f64::INFINITY, f64::min);
                let hi = band().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi - lo)
            }
            NormalizeMode::PerBandStandard => {
                let mean = band().sum::<f64>() / n;
                let var = band().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                (mean, var.sqrt())
            }
        };
        for v in out.data_mut().iter_mut().skip(b).step_by(d) {
            *v = if scale > 0.0 { (*v - shift) / scale } else { 0.0 };
        }
    }
    out
}

pub fn normalize(scene: &SceneCube, mode: NormalizeMode) -> SceneCube {
    SceneCube {
        hsi: normalize_bands(&scene.hsi, mode),
        lidar: normalize_bands(&scene.lidar, mode),
        ..scene.clone()
    }
}
