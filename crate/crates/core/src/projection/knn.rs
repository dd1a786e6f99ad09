use std::cmp::Ordering;

use ndarray::ArrayView2;
use rayon::prelude::*;

/// Exact k-nearest-neighbor lists, self excluded, sorted by
/// `(distance, index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    pub k: usize,
    /// `m × k`, row-major.
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl KnnGraph {
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn neighbor_distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Brute-force Euclidean kNN. Rows are independent, so the parallel loop
/// gives the same answer as a sequential one.
pub fn exact_knn(x: ArrayView2<f64>, k: usize) -> KnnGraph {
    let m = x.nrows();
    assert!(k < m, "k must be smaller than the point count");
    let x = x.as_standard_layout();
    let d = x.ncols();
    let flat = x.as_slice().expect("standard layout");

    let rows: Vec<Vec<(f64, usize)>> = (0..m)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(m),
            |buf, i| {
                buf.clear();
                let xi = &flat[i * d..(i + 1) * d];
                for j in 0..m {
                    if j != i {
                        buf.push((squared_distance(xi, &flat[j * d..(j + 1) * d]), j));
                    }
                }
                if k < buf.len() {
                    buf.select_nth_unstable_by(k - 1, by_distance_then_index);
                }
                let mut best = buf[..k].to_vec();
                best.sort_by(by_distance_then_index);
                best
            },
        )
        .collect();

    let mut indices = Vec::with_capacity(m * k);
    let mut distances = Vec::with_capacity(m * k);
    for row in rows {
        for (d2, j) in row {
            indices.push(j);
            distances.push(d2.sqrt());
        }
    }
    KnnGraph { k, indices, distances }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn line_neighbors() {
        let x = array![[0.0], [1.0], [3.0], [6.0]];
        let g = exact_knn(x.view(), 2);
        assert_eq!(g.neighbors(0), &[1, 2]);
        assert_eq!(g.neighbors(2), &[1, 0]);
        assert_eq!(g.neighbor_distances(3), &[3.0, 5.0]);
    }

    #[test]
    fn ties_break_on_index() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]];
        let g = exact_knn(x.view(), 3);
        assert_eq!(g.neighbors(0), &[1, 2, 3]);
    }
}
