//! UMAP: fuzzy simplicial set over exact kNN, spectral initialization and
//! sequential negative-sampling SGD.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::knn::{exact_knn, KnnGraph};
use super::{check_finite, DrParams, ProjectionError};

const SMOOTH_K_ITERATIONS: usize = 64;
const SMOOTH_K_TOLERANCE: f64 = 1e-5;
const MIN_K_DIST_SCALE: f64 = 1e-3;
const N_EPOCHS: usize = 200;
const NEGATIVE_SAMPLE_RATE: f64 = 5.0;
const INITIAL_ALPHA: f64 = 1.0;
const SPREAD: f64 = 1.0;
const GRADIENT_CLIP: f64 = 4.0;
const SPECTRAL_MAX_ITER: usize = 2_000;
const SPECTRAL_TOLERANCE: f64 = 1e-7;

/// Symmetric fuzzy membership graph as a sorted edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    pub n_vertices: usize,
    /// `(head, tail, weight)`, both directions present, sorted by `(head, tail)`.
    pub edges: Vec<(usize, usize, f64)>,
    pub sigmas: Vec<f64>,
    pub rhos: Vec<f64>,
    pub knn: KnnGraph,
}

/// Solves for `sigma` so that `Σ exp(-max(0, d - rho) / sigma)` over the
/// non-self neighbors equals `log2(n_neighbors)`, by bisection.
fn smooth_knn_dist(knn: &KnnGraph, n_neighbors: usize) -> (Vec<f64>, Vec<f64>) {
    let m = knn.distances.len() / knn.k;
    let target = (n_neighbors as f64).log2();
    let mean_all = knn.distances.iter().sum::<f64>() / knn.distances.len() as f64;
    let mut sigmas = vec![0.0; m];
    let mut rhos = vec![0.0; m];
    for i in 0..m {
        let dists = knn.neighbor_distances(i);
        rhos[i] = dists.iter().copied().find(|&d| d > 0.0).unwrap_or(0.0);
        let rho = rhos[i];
        let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
        for _ in 0..SMOOTH_K_ITERATIONS {
            let psum: f64 = dists
                .iter()
                .map(|&d| {
                    let gap = d - rho;
                    if gap > 0.0 {
                        (-gap / mid).exp()
                    } else {
                        1.0
                    }
                })
                .sum();
            if (psum - target).abs() < SMOOTH_K_TOLERANCE {
                break;
            }
            if psum > target {
                hi = mid;
                mid = (lo + hi) / 2.0;
            } else {
                lo = mid;
                mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
            }
        }
        let floor = if rho > 0.0 {
            MIN_K_DIST_SCALE * dists.iter().sum::<f64>() / dists.len() as f64
        } else {
            MIN_K_DIST_SCALE * mean_all
        };
        sigmas[i] = mid.max(floor);
    }
    (sigmas, rhos)
}

/// Builds the symmetrized membership graph `A + Aᵀ − A∘Aᵀ`.
///
/// `n_neighbors` counts the point itself, so each point keeps
/// `n_neighbors − 1` directed edges.
pub fn fuzzy_graph(x: ArrayView2<f64>, n_neighbors: usize) -> FuzzyGraph {
    let m = x.nrows();
    let knn = exact_knn(x, n_neighbors - 1);
    let (sigmas, rhos) = smooth_knn_dist(&knn, n_neighbors);

    // (row, col, A[row,col], A[col,row]) contributions; merged after sorting.
    let mut entries: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(2 * m * knn.k);
    for i in 0..m {
        for (&j, &d) in knn.neighbors(i).iter().zip(knn.neighbor_distances(i)) {
            let gap = d - rhos[i];
            let w = if gap <= 0.0 || sigmas[i] == 0.0 {
                1.0
            } else {
                (-gap / sigmas[i]).exp()
            };
            entries.push((i, j, w, 0.0));
            entries.push((j, i, 0.0, w));
        }
    }
    entries.sort_by_key(|e| (e.0, e.1));

    let mut edges = Vec::with_capacity(entries.len());
    let mut iter = entries.into_iter().peekable();
    while let Some((r, c, mut a, mut at)) = iter.next() {
        while let Some(&(r2, c2, a2, at2)) = iter.peek() {
            if (r2, c2) != (r, c) {
                break;
            }
            a += a2;
            at += at2;
            iter.next();
        }
        let w = a + at - a * at;
        if w > 0.0 {
            edges.push((r, c, w));
        }
    }
    FuzzyGraph {
        n_vertices: m,
        edges,
        sigmas,
        rhos,
        knn,
    }
}

/// Least-squares fit of `1 / (1 + a·x^(2b))` to the target curve that is 1
/// below `min_dist` and `exp(-(x - min_dist) / spread)` above it, sampled
/// at 300 points on `[0, 3·spread]`. Levenberg-Marquardt from `(1, 1)`.
pub fn fit_curve_params(min_dist: f64, spread: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() })
        .collect();

    let residuals = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let f = 1.0 / (1.0 + a * x.powf(2.0 * b));
                (f - y) * (f - y)
            })
            .sum()
    };

    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut lambda = 1e-3;
    let mut cost = residuals(a, b);
    for _ in 0..500 {
        // Normal equations J^T J δ = -J^T r for the two parameters.
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x <= 0.0 {
                // f(0) = 1 for every (a, b); no gradient.
                continue;
            }
            let p = x.powf(2.0 * b);
            let f = 1.0 / (1.0 + a * p);
            let r = f - y;
            let da = -p * f * f;
            let db = -a * p * 2.0 * x.ln() * f * f;
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut improved = false;
        for _ in 0..20 {
            let (m11, m22) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = m11 * m22 - jab * jab;
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(m22 * ga - jab * gb) / det;
            let step_b = -(m11 * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            let new_cost = if na > 0.0 && nb > 0.0 { residuals(na, nb) } else { f64::INFINITY };
            if new_cost < cost {
                let rel = (cost - new_cost) / cost.max(1e-300);
                a = na;
                b = nb;
                cost = new_cost;
                lambda = (lambda / 10.0).max(1e-12);
                improved = rel > 1e-15;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Second and third eigenvectors of `D^-1/2 S D^-1/2` (the bottom
/// non-trivial eigenvectors of the normalized Laplacian), by orthogonal
/// iteration on `(I + N) / 2` with the trivial eigenvector deflated.
fn spectral_layout(graph: &FuzzyGraph, rng: &mut ChaCha8Rng) -> Option<Vec<[f64; 2]>> {
    let m = graph.n_vertices;
    if m < 3 {
        return None;
    }
    let mut degree = vec![0.0; m];
    for &(h, _, w) in &graph.edges {
        degree[h] += w;
    }
    if degree.iter().any(|&d| d <= 0.0) {
        return None;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let norm0 = degree.iter().sum::<f64>().sqrt();
    let trivial: Vec<f64> = degree.iter().map(|d| d.sqrt() / norm0).collect();

    let apply = |v: &[f64], out: &mut [f64]| {
        out.iter_mut().zip(v).for_each(|(o, x)| *o = 0.5 * x);
        for &(h, t, w) in &graph.edges {
            out[h] += 0.5 * w * inv_sqrt[h] * inv_sqrt[t] * v[t];
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let orthonormalize = |block: &mut [Vec<f64>; 2]| -> bool {
        for c in 0..2 {
            let t = dot(&block[c], &trivial);
            block[c].iter_mut().zip(&trivial).for_each(|(v, u)| *v -= t * u);
            if c == 1 {
                let (first, second) = block.split_at_mut(1);
                let p = dot(&second[0], &first[0]);
                second[0].iter_mut().zip(&first[0]).for_each(|(v, u)| *v -= p * u);
            }
            let n = dot(&block[c], &block[c]).sqrt();
            if !(n > 1e-300) || !n.is_finite() {
                return false;
            }
            block[c].iter_mut().for_each(|v| *v /= n);
        }
        true
    };

    let mut block: [Vec<f64>; 2] = [
        (0..m).map(|_| rng.random::<f64>() - 0.5).collect(),
        (0..m).map(|_| rng.random::<f64>() - 0.5).collect(),
    ];
    if !orthonormalize(&mut block) {
        return None;
    }
    let mut next = [vec![0.0; m], vec![0.0; m]];
    for _ in 0..SPECTRAL_MAX_ITER {
        apply(&block[0], &mut next[0]);
        apply(&block[1], &mut next[1]);
        std::mem::swap(&mut block, &mut next);
        if !orthonormalize(&mut block) {
            return None;
        }
        let change = block
            .iter()
            .zip(&next)
            .map(|(a, b)| 1.0 - dot(a, b).abs())
            .fold(0.0f64, f64::max);
        if change < SPECTRAL_TOLERANCE {
            break;
        }
    }

    // Rayleigh-Ritz on the 2-D subspace so the columns come out ordered.
    apply(&block[0], &mut next[0]);
    apply(&block[1], &mut next[1]);
    let h00 = dot(&block[0], &next[0]);
    let h01 = dot(&block[0], &next[1]);
    let h11 = dot(&block[1], &next[1]);
    let theta = 0.5 * (2.0 * h01).atan2(h00 - h11);
    let (c, s) = (theta.cos(), theta.sin());
    let coords: Vec<[f64; 2]> = (0..m)
        .map(|i| {
            let (u, v) = (block[0][i], block[1][i]);
            [c * u + s * v, -s * u + c * v]
        })
        .collect();
    if coords.iter().flatten().all(|v| v.is_finite()) {
        Some(coords)
    } else {
        None
    }
}

/// Rescales each column to `[0, 10]`.
fn normalize_layout(coords: &mut [[f64; 2]]) {
    for dim in 0..2 {
        let (lo, hi) = coords
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[dim]), hi.max(p[dim])));
        let span = if hi > lo { hi - lo } else { 1.0 };
        coords.iter_mut().for_each(|p| p[dim] = 10.0 * (p[dim] - lo) / span);
    }
}

fn initial_layout(graph: &FuzzyGraph, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let mut coords = match spectral_layout(graph, rng) {
        Some(mut coords) => {
            let max_abs = coords.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let expansion = if max_abs > 0.0 { 10.0 / max_abs } else { 1.0 };
            let jitter = Normal::new(0.0, 1e-4).expect("valid normal");
            for p in &mut coords {
                p[0] = p[0] * expansion + jitter.sample(rng);
                p[1] = p[1] * expansion + jitter.sample(rng);
            }
            coords
        }
        None => (0..graph.n_vertices)
            .map(|_| [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)])
            .collect(),
    };
    normalize_layout(&mut coords);
    coords
}

fn clip(v: f64) -> f64 {
    v.clamp(-GRADIENT_CLIP, GRADIENT_CLIP)
}

/// Sequential SGD over the graph edges with negative sampling.
fn optimize_layout(
    coords: &mut [[f64; 2]],
    graph: &FuzzyGraph,
    a: f64,
    b: f64,
    rng: &mut ChaCha8Rng,
) {
    let m = graph.n_vertices;
    let max_w = graph.edges.iter().map(|e| e.2).fold(0.0f64, f64::max);
    // Edges too weak to be sampled even once are dropped.
    let edges: Vec<(usize, usize, f64)> = graph
        .edges
        .iter()
        .copied()
        .filter(|e| e.2 >= max_w / N_EPOCHS as f64)
        .collect();
    let epochs_per_sample: Vec<f64> = edges.iter().map(|e| max_w / e.2).collect();
    let epochs_per_negative: Vec<f64> = epochs_per_sample
        .iter()
        .map(|e| e / NEGATIVE_SAMPLE_RATE)
        .collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();

    for epoch in 0..N_EPOCHS {
        let alpha = INITIAL_ALPHA * (1.0 - epoch as f64 / N_EPOCHS as f64);
        let n = epoch as f64;
        for (e, &(j, k, _)) in edges.iter().enumerate() {
            if next_sample[e] > n {
                continue;
            }
            let dist2 = sq(coords[j], coords[k]);
            let coeff = if dist2 > 0.0 {
                -2.0 * a * b * dist2.powf(b - 1.0) / (a * dist2.powf(b) + 1.0)
            } else {
                0.0
            };
            for d in 0..2 {
                let grad = clip(coeff * (coords[j][d] - coords[k][d]));
                coords[j][d] += grad * alpha;
                coords[k][d] -= grad * alpha;
            }
            next_sample[e] += epochs_per_sample[e];

            let n_neg = ((n - next_negative[e]) / epochs_per_negative[e]).floor().max(0.0) as usize;
            for _ in 0..n_neg {
                let other = rng.random_range(0..m);
                if other == j {
                    continue;
                }
                let dist2 = sq(coords[j], coords[other]);
                if dist2 <= 0.0 {
                    continue;
                }
                let coeff = 2.0 * b / ((0.001 + dist2) * (a * dist2.powf(b) + 1.0));
                for d in 0..2 {
                    let grad = clip(coeff * (coords[j][d] - coords[other][d]));
                    coords[j][d] += grad * alpha;
                }
            }
            next_negative[e] += n_neg as f64 * epochs_per_negative[e];
        }
    }
}

fn sq(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
}

pub fn umap(x: ArrayView2<f64>, params: &DrParams) -> Result<Array2<f64>, ProjectionError> {
    check_finite(x)?;
    let m = x.nrows();
    if params.n_neighbors < 2 {
        return Err(ProjectionError::InvalidParam("n_neighbors must be >= 2".into()));
    }
    if params.n_neighbors >= m {
        return Err(ProjectionError::TooFewPoints {
            required: params.n_neighbors,
            got: m,
        });
    }
    if !(0.0..1.0).contains(&params.min_dist) {
        return Err(ProjectionError::InvalidParam("min_dist must be in [0, 1)".into()));
    }

    let graph = fuzzy_graph(x, params.n_neighbors);
    let (a, b) = fit_curve_params(params.min_dist, SPREAD);
    let mut rng = seeded_rng(params.random_state);
    let mut coords = initial_layout(&graph, &mut rng);
    optimize_layout(&mut coords, &graph, a, b, &mut rng);

    let mut out = Array2::zeros((m, 2));
    for (i, p) in coords.iter().enumerate() {
        out[[i, 0]] = p[0];
        out[[i, 1]] = p[1];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn curve_fit_matches_reference_values() {
        // Reference values for min_dist = 0.1, spread = 1.
        let (a, b) = fit_curve_params(0.1, 1.0);
        assert!((a - 1.577).abs() < 0.01, "a = {a}");
        assert!((b - 0.895).abs() < 0.01, "b = {b}");
    }

    #[test]
    fn smooth_knn_hits_target() {
        let x = Array2::from_shape_fn((60, 3), |(i, j)| ((i * 7 + j * 13) % 17) as f64 + i as f64 * 0.01);
        let g = fuzzy_graph(x.view(), 10);
        let target = 10f64.log2();
        for i in 0..60 {
            let s: f64 = g
                .knn
                .neighbor_distances(i)
                .iter()
                .map(|&d| if d - g.rhos[i] > 0.0 { (-(d - g.rhos[i]) / g.sigmas[i]).exp() } else { 1.0 })
                .sum();
            assert!((s - target).abs() < 1e-3, "row {i}: {s}");
        }
    }

    #[test]
    fn graph_is_symmetric_fuzzy_union() {
        let x = Array2::from_shape_fn((40, 2), |(i, j)| ((i * 31 + j * 17) % 23) as f64 + 0.1 * i as f64);
        let g = fuzzy_graph(x.view(), 5);
        let lookup = |h: usize, t: usize| g.edges.iter().find(|e| e.0 == h && e.1 == t).map(|e| e.2);
        for &(h, t, w) in &g.edges {
            assert_eq!(lookup(t, h), Some(w));
            assert!(w > 0.0 && w <= 1.0);
        }
    }

    #[test]
    fn errors() {
        let x = Array2::from_shape_fn((10, 2), |(i, j)| (i + j) as f64);
        let p = DrParams::default();
        assert!(matches!(umap(x.view(), &p), Err(ProjectionError::TooFewPoints { .. })));
        let mut bad = x.clone();
        bad[[3, 1]] = f64::NAN;
        assert_eq!(umap(bad.view(), &DrParams { n_neighbors: 3, ..p }).unwrap_err(), ProjectionError::NaNInput);
    }
}
