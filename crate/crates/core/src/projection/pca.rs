use nalgebra::{DMatrix, SymmetricEigen};

use super::ProjectionError;
use crate::matrix::Matrix;

/// Principal-component projection of a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    /// `N × k` scores.
    pub coords: Matrix,
    /// Variance captured by each component (`1/N` convention), descending.
    pub explained_variance: Vec<f64>,
    /// `k × D` unit principal directions.
    pub components: Matrix,
}

/// Projects mean-centered rows onto the top-`k` principal directions.
///
/// Each direction is oriented so its largest-magnitude loading is positive.
/// Identical rows give all-zero scores and zero variance.
pub fn pca_project(data: &Matrix, k: usize) -> Result<PcaProjection, ProjectionError> {
    let n = data.rows();
    let d = data.cols();
    if n < 2 {
        return Err(ProjectionError::TooFewSamples {
            required: 2,
            found: n,
        });
    }
    let max = n.min(d);
    if k == 0 || k > max {
        return Err(ProjectionError::InvalidComponents { k, max });
    }

    let mut mean = vec![0.0; d];
    for row in data.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered = DMatrix::from_fn(n, d, |i, j| data.get(i, j) - mean[j]);
    let nf = n as f64;

    // eigendecompose whichever of the covariance and Gram matrices is smaller
    let (mut values, directions): (Vec<f64>, DMatrix<f64>) = if d <= n {
        let cov = centered.transpose() * &centered / nf;
        let eig = SymmetricEigen::new(cov);
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    } else {
        let gram = &centered * centered.transpose() / nf;
        let eig = SymmetricEigen::new(gram);
        let mut dirs = centered.transpose() * &eig.eigenvectors;
        for mut col in dirs.column_iter_mut() {
            let norm = col.norm();
            if norm > f64::EPSILON * nf.sqrt() {
                col /= norm;
            } else {
                col.fill(0.0);
            }
        }
        (eig.eigenvalues.iter().copied().collect(), dirs)
    };

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    for v in &mut values {
        *v = v.max(0.0);
    }

    let mut components = Matrix::zeros(k, d);
    let mut explained_variance = Vec::with_capacity(k);
    for (c, &src) in order.iter().take(k).enumerate() {
        let col = directions.column(src);
        let pivot = col
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |(bi, bv), (i, &v)| {
                if v.abs() > bv {
                    (i, v.abs())
                } else {
                    (bi, bv)
                }
            })
            .0;
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (j, &v) in col.iter().enumerate() {
            components.set(c, j, sign * v);
        }
        explained_variance.push(values[src]);
    }

    let mut coords = Matrix::zeros(n, k);
    for i in 0..n {
        for c in 0..k {
            let s: f64 = (0..d).map(|j| centered[(i, j)] * components.get(c, j)).sum();
            coords.set(i, c, s);
        }
    }
    // exact zeros for a degenerate point cloud
    if centered.iter().all(|&v| v == 0.0) {
        coords.as_mut_slice().fill(0.0);
        explained_variance.fill(0.0);
    }

    Ok(PcaProjection {
        coords,
        explained_variance,
        components,
    })
}
