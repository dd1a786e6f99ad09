//! Brute-force oracles shared by the integration tests. Deliberately naive
//! and independent of the library's own algorithms.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use dvats::cache::ReactiveCache;
use dvats::pipeline::Pipeline;
use dvats::store::ArtifactStore;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(m: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((m, d), |_| rng.random_range(-1.0..1.0))
}

fn dist(x: ArrayView2<f64>, i: usize, j: usize) -> f64 {
    x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Adjusted Rand index from the contingency table.
pub fn adjusted_rand_index(a: &[i64], b: &[i64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mut table: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    let mut rows: BTreeMap<i64, f64> = BTreeMap::new();
    let mut cols: BTreeMap<i64, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let c2 = |v: f64| v * (v - 1.0) / 2.0;
    let index: f64 = table.values().copied().map(c2).sum();
    let sa: f64 = rows.values().copied().map(c2).sum();
    let sb: f64 = cols.values().copied().map(c2).sum();
    let expected = sa * sb / c2(n);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Double-loop silhouette: noise excluded, singletons score zero.
pub fn naive_silhouette(x: ArrayView2<f64>, labels: &[i64]) -> f64 {
    let pts: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] >= 0).collect();
    let mut total = 0.0;
    for &i in &pts {
        let mut sums: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
        for &j in &pts {
            if j != i {
                let e = sums.entry(labels[j]).or_insert((0.0, 0));
                e.0 += dist(x, i, j);
                e.1 += 1;
            }
        }
        let own = sums.get(&labels[i]).copied();
        let s = match own {
            None => 0.0,
            Some((sum, cnt)) => {
                let a = sum / cnt as f64;
                let b = sums
                    .iter()
                    .filter(|(l, _)| **l != labels[i])
                    .map(|(_, (s, c))| s / *c as f64)
                    .fold(f64::INFINITY, f64::min);
                if a.max(b) == 0.0 {
                    0.0
                } else {
                    (b - a) / a.max(b)
                }
            }
        };
        total += s;
    }
    total / pts.len() as f64
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
/// Returns (eigenvalues, eigenvectors as columns), unsorted.
pub fn jacobi_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[[i, j]].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[[i, i]]).collect(), v)
}

/// Sample covariance (divisor m − 1) computed by explicit loops.
pub fn naive_covariance(x: ArrayView2<f64>) -> Array2<f64> {
    let (m, d) = x.dim();
    let mean: Vec<f64> = (0..d).map(|j| (0..m).map(|i| x[[i, j]]).sum::<f64>() / m as f64).collect();
    Array2::from_shape_fn((d, d), |(a, b)| {
        (0..m).map(|i| (x[[i, a]] - mean[a]) * (x[[i, b]] - mean[b])).sum::<f64>() / (m as f64 - 1.0)
    })
}

/// Total weight of a minimum spanning tree of the mutual-reachability graph
/// by Kruskal over all pairs. Core distance counts the point itself.
pub fn kruskal_mreach_weight(x: ArrayView2<f64>, min_samples: usize) -> f64 {
    let m = x.nrows();
    let core: Vec<f64> = (0..m)
        .map(|i| {
            let mut d: Vec<f64> = (0..m).map(|j| dist(x, i, j)).collect();
            d.sort_by(f64::total_cmp);
            d[(min_samples - 1).min(m - 1)]
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            edges.push((dist(x, i, j).max(core[i]).max(core[j]), i, j));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    let mut total = 0.0;
    for (w, a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            total += w;
        }
    }
    total
}

/// Trustworthiness by explicit rank lists.
pub fn naive_trustworthiness(x: ArrayView2<f64>, y: ArrayView2<f64>, k: usize) -> f64 {
    let m = x.nrows();
    let order = |z: ArrayView2<f64>, i: usize| {
        let mut idx: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        idx.sort_by(|&a, &b| dist(z, i, a).total_cmp(&dist(z, i, b)).then(a.cmp(&b)));
        idx
    };
    let mut penalty = 0.0;
    for i in 0..m {
        let ox = order(x, i);
        let oy = order(y, i);
        for &j in &oy[..k] {
            let rank = ox.iter().position(|&q| q == j).unwrap() + 1;
            if rank > k {
                penalty += (rank - k) as f64;
            }
        }
    }
    let (m, k) = (m as f64, k as f64);
    1.0 - 2.0 / (m * k * (2.0 * m - 3.0 * k - 1.0)) * penalty
}

pub struct Fixture {
    pub _dir: tempfile::TempDir,
    pub store: Arc<ArtifactStore>,
    pub pipeline: Pipeline,
}

pub fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(ArtifactStore::open(dir.path()).unwrap());
    let pipeline = Pipeline::new(store.clone(), Arc::new(ReactiveCache::default()));
    Fixture { _dir: dir, store, pipeline }
}
