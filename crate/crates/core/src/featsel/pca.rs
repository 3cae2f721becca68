use nalgebra::{DMatrix, SymmetricEigen};

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Principal axes of a feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult<T> {
    pub mean: Vec<T>,
    /// Unit-length principal axes, largest variance first.
    pub components: Vec<Vec<T>>,
    /// Eigenvalues of the sample covariance for every feature, descending.
    pub eigenvalues: Vec<T>,
    /// Share of total variance per feature axis; sums to 1.
    pub explained_variance_ratio: Vec<T>,
}

impl<T: Scalar> PcaResult<T> {
    /// Coordinates of `row` on the first `k` components.
    pub fn project(&self, row: &[T], k: usize) -> Vec<T> {
        self.components
            .iter()
            .take(k)
            .map(|c| {
                c.iter()
                    .zip(row.iter().zip(&self.mean))
                    .fold(T::zero(), |acc, (&w, (&x, &mu))| acc + w * (x - mu))
            })
            .collect()
    }

    /// Mean squared reconstruction error using the first `k` components.
    pub fn reconstruction_error(&self, m: &FeatureMatrix<T>, k: usize) -> T {
        let k = k.min(self.components.len());
        let mut total = T::zero();
        for r in 0..m.rows() {
            let row = m.row(r);
            let coords = self.project(row, k);
            for (j, &x) in row.iter().enumerate() {
                let rec = self.mean[j]
                    + coords
                        .iter()
                        .zip(&self.components)
                        .fold(T::zero(), |acc, (&a, c)| acc + a * c[j]);
                total += (x - rec) * (x - rec);
            }
        }
        total / T::of_usize(m.rows().max(1))
    }
}

/// Eigen-decomposition of the sample covariance of `m` (centered, not
/// rescaled; pass a z-scored matrix for correlation PCA). Returns `k`
/// components (capped at the column count) and ratios for every feature.
pub fn pca_fit<T: Scalar>(m: &FeatureMatrix<T>, k: usize) -> Result<PcaResult<T>> {
    if !m.is_finite() {
        return Err(Error::invalid("pca needs a finite matrix"));
    }
    if m.rows() < 2 || m.cols() == 0 {
        return Err(Error::invalid(format!(
            "pca needs at least 2 rows and 1 column, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let (n, d) = (m.rows(), m.cols());
    let mean: Vec<f64> = (0..d)
        .map(|c| (0..n).map(|r| m.get(r, c).as_f64()).sum::<f64>() / n as f64)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in 0..n {
        let row = m.row(r);
        for i in 0..d {
            let xi = row[i].as_f64() - mean[i];
            for j in i..d {
                cov[(i, j)] += xi * (row[j].as_f64() - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    let ratios: Vec<f64> = if total > 0.0 {
        eigenvalues.iter().map(|v| v / total).collect()
    } else {
        let mut r = vec![0.0; d];
        r[0] = 1.0;
        r
    };
    let components = order
        .iter()
        .take(k.min(d))
        .map(|&i| {
            let col = eig.eigenvectors.column(i);
            // sign convention: largest-magnitude entry positive
            let pivot = col
                .iter()
                .copied()
                .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            let s = if pivot < 0.0 { -1.0 } else { 1.0 };
            col.iter().map(|&v| T::of(s * v)).collect()
        })
        .collect();
    Ok(PcaResult {
        mean: mean.into_iter().map(T::of).collect(),
        components,
        eigenvalues: eigenvalues.into_iter().map(T::of).collect(),
        explained_variance_ratio: ratios.into_iter().map(T::of).collect(),
    })
}
