use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{PatchSet, Sample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Two-source toy scenes where class `c` (0-based) draws its spectrum from
/// group `(c + 1) / 2` and its elevation from group `c / 2`. Neighbouring
/// classes therefore share one modality, and only the pair of branches can
/// tell every class apart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub classes: usize,
    pub window: usize,
    pub bands: usize,
    pub lidar_channels: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Standard deviation of per-pixel Gaussian noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 3,
            window: 9,
            bands: 5,
            lidar_channels: 1,
            train_per_class: 20,
            test_per_class: 20,
            noise: 0.15,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn spectral_group(class: usize) -> usize {
        class.div_ceil(2)
    }

    pub fn elevation_group(class: usize) -> usize {
        class / 2
    }

    fn validate(&self) -> Result<()> {
        if self.classes < 2
            || self.window.is_multiple_of(2)
            || self.bands == 0
            || self.lidar_channels == 0
            || self.train_per_class == 0
            || self.noise.is_nan()
            || self.noise < 0.0
        {
            return Err(Error::invalid(format!("synthetic spec {self:?}")));
        }
        Ok(())
    }

    fn signature(&self, group: usize) -> Vec<f64> {
        let groups = Self::spectral_group(self.classes - 1) + 1;
        let k = self.bands as f64;
        let center = (group as f64 + 0.5) / groups as f64 * k;
        let width = (k / (2.0 * groups as f64)).max(0.5);
        (0..self.bands)
            .map(|b| (-((b as f64 + 0.5 - center) / width).powi(2) / 2.0).exp())
            .collect()
    }

    fn sample(&self, class: usize, coord: (usize, usize), rng: &mut ChaCha8Rng) -> Sample {
        let s = self.window;
        let noise = Normal::new(0.0, self.noise.max(1e-300)).expect("finite std");
        let jitter = |rng: &mut ChaCha8Rng| if self.noise > 0.0 { noise.sample(rng) } else { 0.0 };
        let sig = self.signature(Self::spectral_group(class));
        let amp = rng.gen_range(0.8..1.2);
        let mut hsi = Vec::with_capacity(s * s * self.bands);
        for _ in 0..s * s {
            for &v in &sig {
                hsi.push(amp * v + jitter(rng));
            }
        }
        let groups = Self::elevation_group(self.classes - 1) + 1;
        let height = (Self::elevation_group(class) + 1) as f64 / groups as f64;
        let spread = (s as f64 / 3.0).max(1.0);
        let r = (s / 2) as f64;
        let scale = rng.gen_range(0.85..1.15);
        let mut lidar = Vec::with_capacity(s * s * self.lidar_channels);
        for i in 0..s {
            for j in 0..s {
                let d2 = (i as f64 - r).powi(2) + (j as f64 - r).powi(2);
                let bump = scale * height * (-d2 / (2.0 * spread * spread)).exp();
                for ch in 0..self.lidar_channels {
                    lidar.push(bump / (ch + 1) as f64 + jitter(rng));
                }
            }
        }
        Sample {
            hsi: Tensor::new(vec![s, s, self.bands, 1], hsi).expect("consistent extents"),
            lidar: Tensor::new(vec![s, s, self.lidar_channels], lidar).expect("consistent extents"),
            label: class + 1,
            coord,
        }
    }
}

/// Balanced train and test sets. Samples are laid on a virtual square grid,
/// training samples first, so predictions can be drawn as a map.
pub fn synth_generate(spec: &SynthSpec) -> Result<(PatchSet, PatchSet)> {
    spec.validate()?;
    let total = spec.classes * (spec.train_per_class + spec.test_per_class);
    let cols = (total as f64).sqrt().ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let empty = PatchSet {
        window: spec.window,
        bands: spec.bands,
        lidar_channels: spec.lidar_channels,
        samples: Vec::new(),
    };
    let (mut train, mut test) = (empty.clone(), empty);
    let mut next = 0;
    for (set, per_class) in [(&mut train, spec.train_per_class), (&mut test, spec.test_per_class)] {
        for class in 0..spec.classes {
            for _ in 0..per_class {
                let coord = (next / cols, next % cols);
                set.samples.push(spec.sample(class, coord, &mut rng));
                next += 1;
            }
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_spectrum(s: &Sample) -> Vec<f64> {
        let k = s.hsi.shape()[2];
        let n = s.hsi.len() / k;
        (0..k)
            .map(|b| s.hsi.data().iter().skip(b).step_by(k).sum::<f64>() / n as f64)
            .collect()
    }

    #[test]
    fn counts_and_shapes() {
        let (train, test) = synth_generate(&SynthSpec::default()).unwrap();
        assert_eq!(train.len(), 60);
        assert_eq!(train.class_counts(3), vec![20, 20, 20]);
        assert_eq!(test.len(), 60);
        assert_eq!(train.samples[0].hsi.shape(), &[9, 9, 5, 1]);
        assert_eq!(train.samples[0].lidar.shape(), &[9, 9, 1]);
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SynthSpec::default();
        assert_eq!(synth_generate(&spec).unwrap(), synth_generate(&spec).unwrap());
        let other = SynthSpec {
            seed: 1,
            ..spec.clone()
        };
        assert_ne!(synth_generate(&spec).unwrap().0, synth_generate(&other).unwrap().0);
    }

    #[test]
    fn groups_cover_three_classes() {
        let groups: Vec<(usize, usize)> = (0..3)
            .map(|c| (SynthSpec::spectral_group(c), SynthSpec::elevation_group(c)))
            .collect();
        assert_eq!(groups, vec![(0, 0), (1, 0), (1, 1)]);
    }

    /// Nearest-centroid on mean HSI spectra cannot separate the pair that
    /// shares spectral statistics.
    #[test]
    fn spectrally_identical_pair_defeats_hsi_centroids() {
        let spec = SynthSpec {
            train_per_class: 100,
            test_per_class: 100,
            ..Default::default()
        };
        let (train, test) = synth_generate(&spec).unwrap();
        let centroid = |label: usize| {
            let rows: Vec<Vec<f64>> = train
                .samples
                .iter()
                .filter(|s| s.label == label)
                .map(mean_spectrum)
                .collect();
            (0..spec.bands)
                .map(|b| rows.iter().map(|r| r[b]).sum::<f64>() / rows.len() as f64)
                .collect::<Vec<f64>>()
        };
        let (c2, c3) = (centroid(2), centroid(3));
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        let pair: Vec<&Sample> = test.samples.iter().filter(|s| s.label >= 2).collect();
        let correct = pair
            .iter()
            .filter(|s| {
                let m = mean_spectrum(s);
                let guess = if dist(&m, &c2) <= dist(&m, &c3) { 2 } else { 3 };
                guess == s.label
            })
            .count();
        let acc = correct as f64 / pair.len() as f64;
        assert!(acc <= 0.6, "{acc}");

        let c1 = centroid(1);
        let first: Vec<&Sample> = test.samples.iter().filter(|s| s.label <= 2).collect();
        let correct = first
            .iter()
            .filter(|s| {
                let m = mean_spectrum(s);
                let guess = if dist(&m, &c1) <= dist(&m, &c2) { 1 } else { 2 };
                guess == s.label
            })
            .count();
        assert!(correct as f64 / first.len() as f64 > 0.95);
    }

    #[test]
    fn invalid_specs() {
        assert!(synth_generate(&SynthSpec {
            classes: 1,
            ..Default::default()
        })
        .is_err());
        assert!(synth_generate(&SynthSpec {
            window: 4,
            ..Default::default()
        })
        .is_err());
    }
}
