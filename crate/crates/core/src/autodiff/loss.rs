use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probabilities are clamped here before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// `-ln p[label]` for a single probability vector.
pub fn cross_entropy(probabilities: &Tensor, label: usize) -> Result<f64> {
    let classes = probabilities.len();
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(-probabilities.data()[label].max(PROB_FLOOR).ln())
}

/// Mean cross entropy of a `[B, N]` probability batch.
pub fn cross_entropy_batch(probabilities: &Tensor, labels: &[usize]) -> Result<f64> {
    let shape = probabilities.shape();
    if shape.len() != 2 || shape[0] != labels.len() || labels.is_empty() {
        return Err(Error::shape(
            "cross_entropy",
            format!("probabilities {shape:?} for {} labels", labels.len()),
        ));
    }
    let classes = shape[1];
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
        total -= probabilities.data()[i * classes + y].max(PROB_FLOOR).ln();
    }
    Ok(total / labels.len() as f64)
}

/// `α·CE(P_H) + β·CE(P_L) + γ·CE(P_F)` for one sample.
pub fn multi_task_loss(
    p_fusion: &Tensor,
    p_hsi: &Tensor,
    p_lidar: &Tensor,
    label: usize,
    weights: [f64; 3],
) -> Result<f64> {
    let [alpha, beta, gamma] = weights;
    Ok(alpha * cross_entropy(p_hsi, label)?
        + beta * cross_entropy(p_lidar, label)?
        + gamma * cross_entropy(p_fusion, label)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_and_certain() {
        let u = Tensor::full(&[4], 0.25);
        assert!((cross_entropy(&u, 2).unwrap() - 4f64.ln()).abs() < 1e-15);
        let one = Tensor::from_vec(vec![0.0, 1.0, 0.0]);
        assert_eq!(cross_entropy(&one, 1).unwrap(), 0.0);
        assert!(cross_entropy(&one, 0).unwrap().is_finite());
        assert!(matches!(
            cross_entropy(&one, 3),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn batch_average() {
        let p = Tensor::new(vec![2, 2], vec![0.5, 0.5, 0.75, 0.25]).unwrap();
        let l = cross_entropy_batch(&p, &[0, 1]).unwrap();
        assert!((l - (2f64.ln() + 4f64.ln()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn multi_task_combinations() {
        let u = Tensor::full(&[6], 1.0 / 6.0);
        let l = multi_task_loss(&u, &u, &u, 4, [1.0, 1.0, 1.0]).unwrap();
        assert!((l - 3.0 * 6f64.ln()).abs() < 1e-14);

        let pf = Tensor::from_vec(vec![0.1, 0.7, 0.2]);
        let ph = Tensor::from_vec(vec![0.3, 0.3, 0.4]);
        let pl = Tensor::from_vec(vec![0.6, 0.1, 0.3]);
        let only_f = multi_task_loss(&pf, &ph, &pl, 1, [0.0, 0.0, 1.0]).unwrap();
        assert_eq!(only_f, cross_entropy(&pf, 1).unwrap());
        let mixed = multi_task_loss(&pf, &ph, &pl, 2, [0.5, 2.0, 1.5]).unwrap();
        let hand = 0.5 * -(0.4f64.ln()) + 2.0 * -(0.3f64.ln()) + 1.5 * -(0.2f64.ln());
        assert!((mixed - hand).abs() <= 1e-12);
        assert!(multi_task_loss(&pf, &ph, &pl, 3, [1.0; 3]).is_err());
    }
}
