use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// Accuracy summary. Rows of `confusion` are the true class.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub classes: usize,
    pub confusion: Vec<Vec<usize>>,
    /// Recall per class in percent; `None` for classes absent from the labels.
    pub per_class: Vec<Option<f64>>,
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
}

/// `predictions` and `labels` are 1-based classes.
pub fn compute_metrics(predictions: &[usize], labels: &[usize], classes: usize) -> Result<MetricsReport> {
    if labels.is_empty() {
        return Err(Error::invalid("no samples to score"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &t) in predictions.iter().zip(labels) {
        for v in [p, t] {
            if v == 0 || v > classes {
                return Err(Error::LabelOutOfRange { label: v, classes });
            }
        }
        confusion[t - 1][p - 1] += 1;
    }
    Ok(from_confusion(confusion))
}

pub(crate) fn from_confusion(confusion: Vec<Vec<usize>>) -> MetricsReport {
    let classes = confusion.len();
    let n: usize = confusion.iter().flatten().sum();
    let nf = n as f64;
    let diag: usize = (0..classes).map(|i| confusion[i][i]).sum();
    let per_class: Vec<Option<f64>> = confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| 100.0 * row[i] as f64 / total as f64)
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let aa = present.iter().sum::<f64>() / present.len() as f64;
    let p_o = diag as f64 / nf;
    let p_e: f64 = (0..classes)
        .map(|i| {
            let row: usize = confusion[i].iter().sum();
            let col: usize = confusion.iter().map(|r| r[i]).sum();
            row as f64 * col as f64
        })
        .sum::<f64>()
        / (nf * nf);
    let kappa = if 1.0 - p_e == 0.0 {
        if p_o == 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (p_o - p_e) / (1.0 - p_e)
    };
    MetricsReport {
        classes,
        confusion,
        per_class,
        oa: 100.0 * p_o,
        aa,
        kappa,
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "OA    {:8.3}", self.oa)?;
        writeln!(f, "AA    {:8.3}", self.aa)?;
        writeln!(f, "kappa {:8.5}", self.kappa)?;
        for (i, acc) in self.per_class.iter().enumerate() {
            match acc {
                Some(a) => writeln!(f, "class {:3} {:8.3}", i + 1, a)?,
                None => writeln!(f, "class {:3}      n/a", i + 1)?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn expand(confusion: &[[usize; 3]; 3]) -> (Vec<usize>, Vec<usize>) {
        let (mut p, mut t) = (Vec::new(), Vec::new());
        for (i, row) in confusion.iter().enumerate() {
            for (j, &n) in row.iter().enumerate() {
                for _ in 0..n {
                    t.push(i + 1);
                    p.push(j + 1);
                }
            }
        }
        (p, t)
    }

    #[test]
    fn toy_matrix_by_hand() {
        let (p, t) = expand(&[[5, 0, 0], [0, 4, 1], [0, 2, 3]]);
        let m = compute_metrics(&p, &t, 3).unwrap();
        assert!((m.oa - 80.0).abs() <= 1e-12);
        assert!((m.aa - 80.0).abs() <= 1e-12);
        // rows 5,5,5; columns 5,6,4
        let p_e = (25.0 + 30.0 + 20.0) / 225.0;
        let kappa = (0.8 - p_e) / (1.0 - p_e);
        assert!((m.kappa - kappa).abs() <= 1e-12);
        assert_eq!(m.confusion[2], vec![0, 2, 3]);
    }

    #[test]
    fn perfect_and_degenerate() {
        let m = compute_metrics(&[1, 2, 3], &[1, 2, 3], 3).unwrap();
        assert_eq!((m.oa, m.aa, m.kappa), (100.0, 100.0, 1.0));
        let m = compute_metrics(&[2, 2, 2], &[2, 2, 2], 3).unwrap();
        assert_eq!((m.oa, m.aa, m.kappa), (100.0, 100.0, 1.0));
        assert_eq!(m.per_class, vec![None, Some(100.0), None]);
        let m = compute_metrics(&[1, 1, 1, 1], &[1, 1, 2, 2], 2).unwrap();
        assert_eq!(m.kappa, 0.0);
        assert_eq!(m.oa, 50.0);
    }

    #[test]
    fn guards() {
        assert!(compute_metrics(&[], &[], 2).is_err());
        assert!(compute_metrics(&[1], &[1, 2], 2).is_err());
        assert!(compute_metrics(&[3], &[1], 2).is_err());
        assert!(compute_metrics(&[1], &[0], 2).is_err());
    }

    fn pairs() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (1usize..60).prop_flat_map(|n| {
            (
                prop::collection::vec(1usize..=4, n),
                prop::collection::vec(1usize..=4, n),
            )
        })
    }

    proptest! {
        #[test]
        fn kappa_bounded_and_one_iff_diagonal((p, t) in pairs()) {
            let m = compute_metrics(&p, &t, 4).unwrap();
            prop_assert!((-1.0..=1.0).contains(&m.kappa));
            let diagonal = p == t;
            prop_assert_eq!(m.kappa == 1.0, diagonal);
        }

        #[test]
        fn relabeling_invariant((p, t) in pairs(), perm in Just([0usize, 1, 2, 3]).prop_shuffle()) {
            let m = compute_metrics(&p, &t, 4).unwrap();
            let map = |v: &Vec<usize>| v.iter().map(|&c| perm[c - 1] + 1).collect::<Vec<_>>();
            let r = compute_metrics(&map(&p), &map(&t), 4).unwrap();
            prop_assert_eq!(m.oa, r.oa);
            prop_assert!((m.aa - r.aa).abs() <= 1e-9);
            prop_assert!((m.kappa - r.kappa).abs() <= 1e-12);
        }
    }
}
