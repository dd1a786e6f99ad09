use ndarray::ArrayView2;
use rayon::prelude::*;

use super::knn::{by_distance_then_index, exact_knn, squared_distance};
use super::ProjectionError;

/// Trustworthiness of the embedding `y` of `x` at neighborhood size `k`:
///
/// `1 − 2 / (m·k·(2m − 3k − 1)) · Σᵢ Σ_{j ∈ Uᵢ} (r(i, j) − k)`
///
/// where `Uᵢ` are the `k` nearest neighbors of `i` in `y` that are not among
/// its `k` nearest in `x`, and `r(i, j)` is the rank of `j` by distance from
/// `i` in `x` (nearest non-self point has rank 1).
pub fn trustworthiness(x: ArrayView2<f64>, y: ArrayView2<f64>, k: usize) -> Result<f64, ProjectionError> {
    let m = x.nrows();
    if y.nrows() != m {
        return Err(ProjectionError::InvalidParam(format!(
            "row counts differ: {m} vs {}",
            y.nrows()
        )));
    }
    if k == 0 || 2 * k >= m {
        return Err(ProjectionError::KTooLarge { k, m });
    }
    let low = exact_knn(y, k);
    let x = x.as_standard_layout();
    let d = x.ncols();
    let flat = x.as_slice().expect("standard layout");

    let penalty: f64 = (0..m)
        .into_par_iter()
        .map(|i| {
            let xi = &flat[i * d..(i + 1) * d];
            let mut order: Vec<(f64, usize)> = (0..m)
                .filter(|&j| j != i)
                .map(|j| (squared_distance(xi, &flat[j * d..(j + 1) * d]), j))
                .collect();
            order.sort_by(by_distance_then_index);
            let mut rank = vec![0usize; m];
            for (r, &(_, j)) in order.iter().enumerate() {
                rank[j] = r + 1;
            }
            low.neighbors(i)
                .iter()
                .map(|&j| rank[j].saturating_sub(k) as f64)
                .sum::<f64>()
        })
        .sum();

    let (mf, kf) = (m as f64, k as f64);
    Ok(1.0 - penalty * 2.0 / (mf * kf * (2.0 * mf - 3.0 * kf - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_square_is_perfect() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [5.0, 5.0]];
        assert_eq!(trustworthiness(x.view(), x.view(), 1).unwrap(), 1.0);
    }

    #[test]
    fn k_bounds() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        assert!(matches!(trustworthiness(x.view(), x.view(), 2), Err(ProjectionError::KTooLarge { .. })));
        assert!(trustworthiness(x.view(), x.view(), 1).is_ok());
    }
}
