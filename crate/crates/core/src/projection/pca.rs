use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{check_finite, ProjectionError};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// `m × k` projections of the centered data.
    pub scores: Array2<f64>,
    /// `k × d`, one unit-norm principal axis per row.
    pub components: Array2<f64>,
    /// Eigenvalues of the sample covariance (divisor `m − 1`), descending.
    pub explained_variance: Vec<f64>,
    pub mean: Array1<f64>,
}

/// Exact PCA by eigendecomposition of the sample covariance.
///
/// Each component is oriented so that its largest-magnitude loading is
/// positive (first such index on ties).
pub fn pca(x: ArrayView2<f64>, k: usize) -> Result<PcaResult, ProjectionError> {
    let (m, d) = x.dim();
    if m < 2 {
        return Err(ProjectionError::DegenerateInput(format!("PCA needs at least 2 rows, got {m}")));
    }
    if k == 0 || k > m.min(d) {
        return Err(ProjectionError::InvalidParam(format!(
            "PCA target dimension {k} must be in 1..={}",
            m.min(d)
        )));
    }
    check_finite(x)?;

    let mean = x.mean_axis(Axis(0)).expect("m >= 2");
    let centered = &x - &mean;
    let cov = centered.t().dot(&centered) / (m as f64 - 1.0);
    let cov = DMatrix::from_fn(d, d, |i, j| 0.5 * (cov[[i, j]] + cov[[j, i]]));
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Array2::<f64>::zeros((k, d));
    let mut explained_variance = Vec::with_capacity(k);
    for (row, &idx) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let mut pivot = 0;
        for j in 1..d {
            if v[j].abs() > v[pivot].abs() {
                pivot = j;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[[row, j]] = sign * v[j];
        }
        // Round-off can leave tiny negative eigenvalues on rank-deficient input.
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }

    let scores = centered.dot(&components.t());
    Ok(PcaResult {
        scores,
        components,
        explained_variance,
        mean,
    })
}
