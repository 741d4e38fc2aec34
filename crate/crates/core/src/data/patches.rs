use super::{PatchSet, Sample, SceneCube};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reflects `i` into `0..n` without repeating the edge sample.
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// `s x s` window of a `[W, H, C]` raster centered on `(x, y)`.
pub(crate) fn window(t: &Tensor, x: usize, y: usize, s: usize) -> Vec<f64> {
    let (w, h, c) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let r = (s / 2) as isize;
    let mut out = Vec::with_capacity(s * s * c);
    for dx in -r..=r {
        let ix = mirror(x as isize + dx, w);
        for dy in -r..=r {
            let iy = mirror(y as isize + dy, h);
            let o = (ix * h + iy) * c;
            out.extend_from_slice(&t.data()[o..o + c]);
        }
    }
    out
}

/// One sample per labeled pixel. `hsi_reduced` is `[W, H, K]`, typically the
/// PCA projection of `scene.hsi`.
pub fn extract_patches(scene: &SceneCube, s: usize, hsi_reduced: &Tensor) -> Result<PatchSet> {
    let (w, h) = (scene.width(), scene.height());
    if s.is_multiple_of(2) || s == 0 {
        return Err(Error::invalid(format!("window {s} must be odd")));
    }
    if s > 2 * w.min(h) || (s / 2) >= w.min(h) {
        return Err(Error::invalid(format!("window {s} too large for a {w}x{h} scene")));
    }
    if hsi_reduced.rank() != 3 || hsi_reduced.shape()[..2] != [w, h] {
        return Err(Error::shape(
            "extract_patches",
            format!("reduced hsi {:?} for a {w}x{h} scene", hsi_reduced.shape()),
        ));
    }
    let k = hsi_reduced.shape()[2];
    let cl = scene.lidar.shape()[2];
    let mut samples = Vec::new();
    for x in 0..w {
        for y in 0..h {
            let label = scene.labels[x * h + y];
            if label == 0 {
                continue;
            }
            samples.push(Sample {
                hsi: Tensor::new(vec![s, s, k, 1], window(hsi_reduced, x, y, s))?,
                lidar: Tensor::new(vec![s, s, cl], window(&scene.lidar, x, y, s))?,
                label,
                coord: (x, y),
            });
        }
    }
    Ok(PatchSet {
        window: s,
        bands: k,
        lidar_channels: cl,
        samples,
    })
}
