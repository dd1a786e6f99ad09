//! HDBSCAN over projected points and silhouette scoring.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::columnar::{Column, Table};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusteringError {
    #[error("input contains NaN or infinite coordinates")]
    NaNInput,
    #[error("silhouette needs at least two non-noise clusters")]
    FewerThanTwoClusters,
    #[error("invalid clustering parameter: {0}")]
    InvalidParam(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClusterParams {
    pub min_cluster_size: usize,
    /// Defaults to `min_cluster_size`. Counts the point itself.
    #[serde(default)]
    pub min_samples: Option<usize>,
}

impl ClusterParams {
    pub fn new(min_cluster_size: usize) -> Self {
        ClusterParams {
            min_cluster_size,
            min_samples: None,
        }
    }

    pub fn with_min_samples(mut self, min_samples: usize) -> Self {
        self.min_samples = Some(min_samples);
        self
    }

    pub fn effective_min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }

    pub fn validate(&self) -> Result<(), ClusteringError> {
        if self.min_cluster_size < 2 {
            return Err(ClusteringError::InvalidParam(format!(
                "min_cluster_size must be >= 2, got {}",
                self.min_cluster_size
            )));
        }
        if self.min_samples == Some(0) {
            return Err(ClusteringError::InvalidParam("min_samples must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams::new(5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLabels {
    /// One label per point, `-1` for noise.
    pub labels: Vec<i64>,
    pub n_clusters: usize,
    pub score: Option<f64>,
}

impl ClusterLabels {
    pub fn to_table(&self) -> Table {
        Table::new(vec![Column::i64("label", self.labels.clone())])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

fn check_finite(x: ArrayView2<f64>) -> Result<(), ClusteringError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ClusteringError::NaNInput)
    }
}

fn rows(x: ArrayView2<f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Distance to the `min_samples`-th nearest point, the point itself being
/// the first.
fn core_distances(pts: &[Vec<f64>], min_samples: usize) -> Vec<f64> {
    let m = pts.len();
    let k = min_samples.min(m).max(1) - 1;
    (0..m)
        .into_par_iter()
        .map(|i| {
            if k == 0 {
                return 0.0;
            }
            let mut d: Vec<f64> = (0..m).filter(|&j| j != i).map(|j| dist(&pts[i], &pts[j])).collect();
            d.select_nth_unstable_by(k - 1, f64::total_cmp);
            d[k - 1]
        })
        .collect()
}

/// Minimum spanning tree of the mutual-reachability graph by Prim's
/// algorithm. Edges come out in insertion order.
pub fn mutual_reachability_mst(x: ArrayView2<f64>, min_samples: usize) -> Result<Vec<MstEdge>, ClusteringError> {
    check_finite(x)?;
    let pts = rows(x);
    Ok(mst_of(&pts, &core_distances(&pts, min_samples)))
}

fn mst_of(pts: &[Vec<f64>], core: &[f64]) -> Vec<MstEdge> {
    let m = pts.len();
    if m < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; m];
    let mut best = vec![f64::INFINITY; m];
    let mut parent = vec![0usize; m];
    let mut edges = Vec::with_capacity(m - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..m {
        let mut next = usize::MAX;
        let mut next_d = f64::INFINITY;
        for j in 0..m {
            if in_tree[j] {
                continue;
            }
            let d = dist(&pts[current], &pts[j]).max(core[current]).max(core[j]);
            if d < best[j] {
                best[j] = d;
                parent[j] = current;
            }
            if next == usize::MAX || best[j] < next_d {
                next = j;
                next_d = best[j];
            }
        }
        in_tree[next] = true;
        let (a, b) = (parent[next].min(next), parent[next].max(next));
        edges.push(MstEdge { a, b, weight: next_d });
        current = next;
    }
    edges
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Single-linkage merge `(left, right, distance, size)`; node ids `>= m`
/// refer to earlier merges.
type Merge = (usize, usize, f64, usize);

fn single_linkage(m: usize, mut edges: Vec<MstEdge>) -> Vec<Merge> {
    edges.sort_by(|x, y| x.weight.total_cmp(&y.weight).then(x.a.cmp(&y.a)).then(x.b.cmp(&y.b)));
    let mut uf = UnionFind::new(2 * m - 1);
    let mut size = vec![1usize; 2 * m - 1];
    let mut merges = Vec::with_capacity(m - 1);
    for (step, e) in edges.iter().enumerate() {
        let (ra, rb) = (uf.find(e.a), uf.find(e.b));
        let node = m + step;
        uf.parent[ra] = node;
        uf.parent[rb] = node;
        size[node] = size[ra] + size[rb];
        merges.push((ra, rb, e.weight, size[node]));
    }
    merges
}

struct CondensedEdge {
    parent: usize,
    child: usize,
    lambda: f64,
    size: usize,
}

fn lambda_of(d: f64) -> f64 {
    if d > 0.0 {
        1.0 / d
    } else {
        f64::INFINITY
    }
}

/// Condensed tree: cluster ids start at `m` (the root), points keep their
/// index.
///
/// Merges at exactly the same distance are flattened into one multi-way
/// split, so the tree does not depend on how the MST ordered tied edges.
fn condense(m: usize, merges: &[Merge], min_cluster_size: usize) -> Vec<CondensedEdge> {
    let root = 2 * m - 2;
    let node_size = |n: usize| if n < m { 1 } else { merges[n - m].3 };
    let mut out = Vec::new();
    let mut label_of = vec![0usize; 2 * m - 1];
    label_of[root] = m;
    let mut next_label = m + 1;
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        if node < m {
            continue;
        }
        let d = merges[node - m].2;
        let lambda = lambda_of(d);
        let parent = label_of[node];

        let mut parts = Vec::new();
        let mut open = vec![node];
        while let Some(n) = open.pop() {
            let (l, r, _, _) = merges[n - m];
            for c in [l, r] {
                if c >= m && merges[c - m].2 == d {
                    open.push(c);
                } else {
                    parts.push(c);
                }
            }
        }
        parts.sort_by_key(|&c| std::cmp::Reverse(node_size(c)));
        let n_big = parts.iter().filter(|&&c| node_size(c) >= min_cluster_size).count();
        for &child in &parts {
            let s = node_size(child);
            if s < min_cluster_size {
                for p in leaves(child, m, merges) {
                    out.push(CondensedEdge {
                        parent,
                        child: p,
                        lambda,
                        size: 1,
                    });
                }
            } else if n_big == 1 {
                label_of[child] = parent;
                stack.push(child);
            } else {
                label_of[child] = next_label;
                out.push(CondensedEdge {
                    parent,
                    child: next_label,
                    lambda,
                    size: s,
                });
                next_label += 1;
                stack.push(child);
            }
        }
    }
    out
}

fn leaves(node: usize, m: usize, merges: &[Merge]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![node];
    while let Some(n) = stack.pop() {
        if n < m {
            out.push(n);
        } else {
            let (l, r, _, _) = merges[n - m];
            stack.push(l);
            stack.push(r);
        }
    }
    out
}

/// Excess-of-mass selection; the root is never selected.
fn select_clusters(m: usize, tree: &[CondensedEdge]) -> Vec<bool> {
    let n_clusters = tree.iter().map(|e| e.child.max(e.parent) + 1).max().unwrap_or(m + 1).max(m + 1) - m;
    let mut birth = vec![0.0f64; n_clusters];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for e in tree {
        if e.child >= m {
            birth[e.child - m] = e.lambda;
            children[e.parent - m].push(e.child - m);
        }
    }
    let mut stability = vec![0.0f64; n_clusters];
    for e in tree {
        let b = birth[e.parent - m];
        let gain = if e.lambda == b { 0.0 } else { e.lambda - b };
        stability[e.parent - m] += gain * e.size as f64;
    }

    let mut selected = vec![false; n_clusters];
    // Children always carry larger ids than their parent.
    for c in (1..n_clusters).rev() {
        let child_sum: f64 = children[c].iter().map(|&k| stability[k]).sum();
        if children[c].is_empty() || stability[c] >= child_sum {
            selected[c] = true;
            let mut stack = children[c].clone();
            while let Some(k) = stack.pop() {
                selected[k] = false;
                stack.extend(children[k].iter().copied());
            }
        } else {
            stability[c] = child_sum;
        }
    }
    selected
}

pub fn hdbscan(x: ArrayView2<f64>, params: &ClusterParams) -> Result<ClusterLabels, ClusteringError> {
    params.validate()?;
    check_finite(x)?;
    let m = x.nrows();
    if m < params.min_cluster_size || m < 2 {
        return Ok(ClusterLabels {
            labels: vec![-1; m],
            n_clusters: 0,
            score: None,
        });
    }
    let pts = rows(x);
    let core = core_distances(&pts, params.effective_min_samples());
    let merges = single_linkage(m, mst_of(&pts, &core));
    let tree = condense(m, &merges, params.min_cluster_size);
    let selected = select_clusters(m, &tree);

    let n_nodes = selected.len();
    let mut cluster_parent = vec![usize::MAX; n_nodes];
    let mut point_parent = vec![usize::MAX; m];
    for e in &tree {
        if e.child >= m {
            cluster_parent[e.child - m] = e.parent - m;
        } else {
            point_parent[e.child] = e.parent - m;
        }
    }
    let selected_ancestor = |mut c: usize| -> Option<usize> {
        loop {
            if selected[c] {
                return Some(c);
            }
            if cluster_parent[c] == usize::MAX {
                return None;
            }
            c = cluster_parent[c];
        }
    };

    // Renumber clusters in order of their smallest member index.
    let mut renumber = vec![-1i64; n_nodes];
    let mut n_clusters = 0usize;
    let mut labels = vec![-1i64; m];
    for (i, label) in labels.iter_mut().enumerate() {
        if let Some(c) = selected_ancestor(point_parent[i]) {
            if renumber[c] < 0 {
                renumber[c] = n_clusters as i64;
                n_clusters += 1;
            }
            *label = renumber[c];
        }
    }
    Ok(ClusterLabels {
        labels,
        n_clusters,
        score: None,
    })
}

/// HDBSCAN followed by the silhouette of the non-noise points, when it is
/// defined.
pub fn cluster_and_score(x: ArrayView2<f64>, params: &ClusterParams) -> Result<ClusterLabels, ClusteringError> {
    let mut out = hdbscan(x, params)?;
    out.score = match silhouette_score(x, &out.labels) {
        Ok(s) => Some(s),
        Err(ClusteringError::FewerThanTwoClusters) => None,
        Err(e) => return Err(e),
    };
    Ok(out)
}

/// Mean silhouette over points with a non-negative label.
pub fn silhouette_score(x: ArrayView2<f64>, labels: &[i64]) -> Result<f64, ClusteringError> {
    if labels.len() != x.nrows() {
        return Err(ClusteringError::InvalidParam(format!(
            "{} labels for {} points",
            labels.len(),
            x.nrows()
        )));
    }
    check_finite(x)?;
    let kept: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] >= 0).collect();
    let mut ids: Vec<i64> = kept.iter().map(|&i| labels[i]).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(ClusteringError::FewerThanTwoClusters);
    }
    let slot = |l: i64| ids.binary_search(&l).expect("known label");
    let mut counts = vec![0usize; ids.len()];
    for &i in &kept {
        counts[slot(labels[i])] += 1;
    }
    let pts = rows(x);

    let total: f64 = kept
        .par_iter()
        .map(|&i| {
            let own = slot(labels[i]);
            if counts[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; ids.len()];
            for &j in &kept {
                if j != i {
                    sums[slot(labels[j])] += dist(&pts[i], &pts[j]);
                }
            }
            let a = sums[own] / (counts[own] - 1) as f64;
            let b = (0..ids.len())
                .filter(|&c| c != own)
                .map(|c| sums[c] / counts[c] as f64)
                .min_by(f64::total_cmp)
                .expect("two clusters");
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .sum();
    Ok(total / kept.len() as f64)
}

/// Compares two labelings as partitions, ignoring label names.
pub fn same_partition(a: &[i64], b: &[i64]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = std::collections::HashMap::new();
    let mut back = std::collections::HashMap::new();
    a.iter().zip(b).all(|(&x, &y)| {
        if (x < 0) != (y < 0) {
            return false;
        }
        if x < 0 {
            return true;
        }
        *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x
    })
}
