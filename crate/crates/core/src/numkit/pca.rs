use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Projects rows of `x` onto the top-`k` principal directions of the centered data.
///
/// Directions are ordered by decreasing eigenvalue of the sample covariance and
/// each is sign-normalized so that its largest-magnitude component is positive.
pub fn pca_project(x: &Matrix, k: usize) -> Result<Matrix> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::shape(format!("PCA needs at least 2 rows, got {n}")));
    }
    if k > d {
        return Err(Error::shape(format!("cannot keep {k} components of {d}-dim data")));
    }
    let mut centered = x.clone();
    for j in 0..d {
        let mean = (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64;
        for i in 0..n {
            centered[(i, j)] -= mean;
        }
    }
    let cov = centered.t_matmul(&centered)?.scale(1.0 / (n - 1) as f64);
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, cov.as_slice()));

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut basis = Matrix::zeros(d, k);
    for (out_col, &src) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(src);
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |acc, c| if c.abs() > acc.abs() { c } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for r in 0..d {
            basis[(r, out_col)] = sign * v[r];
        }
    }
    centered.matmul(&basis)
}
