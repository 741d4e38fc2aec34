use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fitted spectral projection.
#[derive(Clone, Debug)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `D x K`, columns are unit eigenvectors in descending eigenvalue order.
    pub components: DMatrix<f64>,
    /// All `D` eigenvalues, descending, clamped at 0.
    pub eigenvalues: Vec<f64>,
}

impl Pca {
    /// Fits on every pixel of `hsi [W, H, D]`.
    pub fn fit(hsi: &Tensor, k: usize) -> Result<Self> {
        if hsi.rank() != 3 {
            return Err(Error::shape(
                "pca",
                format!("expected [W, H, D], got {:?}", hsi.shape()),
            ));
        }
        let d = hsi.shape()[2];
        let n = hsi.len() / d;
        if k == 0 || k > d {
            return Err(Error::invalid(format!("K = {k} with {d} bands")));
        }
        if n < k + 1 {
            return Err(Error::invalid(format!("{n} pixels cannot support {k} components")));
        }
        let x = DMatrix::from_row_slice(n, d, hsi.data());
        let mean: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
        let mut centered = x;
        for (j, m) in mean.iter().enumerate() {
            centered.column_mut(j).add_scalar_mut(-m);
        }
        let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let mut components = DMatrix::zeros(d, k);
        for (c, &i) in order.iter().take(k).enumerate() {
            let mut v = eig.eigenvectors.column(i).into_owned();
            let lead = v
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if lead < 0.0 {
                v.neg_mut();
            }
            components.set_column(c, &v);
        }
        Ok(Pca {
            mean,
            components,
            eigenvalues,
        })
    }

    /// `[W, H, D] -> [W, H, K]`.
    pub fn transform(&self, hsi: &Tensor) -> Result<Tensor> {
        let d = self.mean.len();
        if hsi.rank() != 3 || hsi.shape()[2] != d {
            return Err(Error::shape(
                "pca",
                format!("expected [W, H, {d}], got {:?}", hsi.shape()),
            ));
        }
        let n = hsi.len() / d;
        let mut x = DMatrix::from_row_slice(n, d, hsi.data());
        for (j, m) in self.mean.iter().enumerate() {
            x.column_mut(j).add_scalar_mut(-m);
        }
        let y = x * &self.components;
        let k = self.components.ncols();
        let mut out = Vec::with_capacity(n * k);
        for r in 0..n {
            out.extend(y.row(r).iter());
        }
        Tensor::new(vec![hsi.shape()[0], hsi.shape()[1], k], out)
    }
}

pub fn pca_reduce(hsi: &Tensor, k: usize) -> Result<(Tensor, Pca)> {
    let pca = Pca::fit(hsi, k)?;
    Ok((pca.transform(hsi)?, pca))
}
