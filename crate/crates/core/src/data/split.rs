use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PatchSet;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum SplitSpec {
    /// Training samples for classes 1..=N.
    PerClass(Vec<usize>),
    /// Fraction of every class, rounded to the nearest count.
    Fraction(f64),
}

/// Seeded stratified split; everything not drawn for training is test data.
pub fn split(patches: &PatchSet, spec: &SplitSpec, classes: usize, seed: u64) -> Result<(PatchSet, PatchSet)> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, s) in patches.samples.iter().enumerate() {
        if s.label == 0 || s.label > classes {
            return Err(Error::LabelOutOfRange {
                label: s.label,
                classes,
            });
        }
        by_class[s.label - 1].push(i);
    }
    let wanted: Vec<usize> = match spec {
        SplitSpec::PerClass(counts) => {
            if counts.len() != classes {
                return Err(Error::invalid(format!(
                    "{} per-class counts for {classes} classes",
                    counts.len()
                )));
            }
            counts.clone()
        }
        SplitSpec::Fraction(f) => {
            if !(0.0..=1.0).contains(f) {
                return Err(Error::invalid(format!("fraction {f} outside [0, 1]")));
            }
            by_class.iter().map(|v| (v.len() as f64 * f).round() as usize).collect()
        }
    };
    let deficient: Vec<(usize, usize, usize)> = wanted
        .iter()
        .zip(&by_class)
        .enumerate()
        .filter(|(_, (&w, have))| w > have.len())
        .map(|(c, (&w, have))| (c + 1, w, have.len()))
        .collect();
    if !deficient.is_empty() {
        return Err(Error::InfeasibleSplit(deficient));
    }
    if wanted.iter().sum::<usize>() == 0 {
        return Err(Error::invalid("split leaves the training set empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (mut idx, w) in by_class.into_iter().zip(wanted) {
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..w]);
        test.extend_from_slice(&idx[w..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((patches.subset(&train), patches.subset(&test)))
}
