//! Library results against independent brute-force oracles.

mod common;

use approx::assert_abs_diff_eq;
use common::*;
use dvats::clustering::{hdbscan, mutual_reachability_mst, same_partition, silhouette_score, ClusterParams};
use dvats::projection::{pca, project_array, trustworthiness, Algorithm, DrParams};
use dvats::synthetic::two_blobs;
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn pca_matches_jacobi_oracle() {
    let x = random_matrix(200, 10, 7);
    let r = pca(x.view(), 10).unwrap();

    let (vals, vecs) = jacobi_eigen(&naive_covariance(x.view()));
    let mut order: Vec<usize> = (0..10).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    for (row, &idx) in order.iter().enumerate() {
        assert_abs_diff_eq!(r.explained_variance[row], vals[idx], epsilon = 1e-8);
        let v = vecs.column(idx);
        let pivot = (0..10).fold(0, |p, j| if v[j].abs() > v[p].abs() { j } else { p });
        let sign = v[pivot].signum();
        for j in 0..10 {
            assert_abs_diff_eq!(r.components[[row, j]], sign * v[j], epsilon = 1e-8);
        }
    }
}

#[test]
fn pca_full_rank_reconstructs_and_is_orthonormal() {
    let x = random_matrix(120, 6, 3);
    let r = pca(x.view(), 6).unwrap();
    let back = r.scores.dot(&r.components) + &r.mean;
    assert!((&back - &x).iter().all(|e| e.abs() <= 1e-8));
    let gram = r.components.dot(&r.components.t());
    assert!((&gram - &Array2::<f64>::eye(6)).iter().all(|e| e.abs() <= 1e-8));
    assert!(r.explained_variance.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn pca_translation_keeps_pairwise_distances() {
    let x = random_matrix(80, 5, 11);
    let shifted = &x + 1234.5;
    let a = project_array(x.view(), &DrParams::with_algorithm(Algorithm::Pca)).unwrap();
    let b = project_array(shifted.view(), &DrParams::with_algorithm(Algorithm::Pca)).unwrap();
    for i in 0..80 {
        for j in 0..80 {
            let da = (&a.row(i) - &a.row(j)).mapv(|v| v * v).sum().sqrt();
            let db = (&b.row(i) - &b.row(j)).mapv(|v| v * v).sum().sqrt();
            assert!((da - db).abs() < 1e-6);
        }
    }
}

#[test]
fn pca_on_plane_is_perfectly_trustworthy() {
    let base = random_matrix(150, 2, 5);
    let lift = ndarray::array![[1.0, 0.5, -0.3, 2.0], [0.2, -1.0, 0.7, 0.1]];
    let x = base.dot(&lift);
    let y = project_array(x.view(), &DrParams::with_algorithm(Algorithm::Pca)).unwrap();
    assert_abs_diff_eq!(trustworthiness(x.view(), y.view(), 10).unwrap(), 1.0, epsilon = 1e-12);
}

#[test]
fn trustworthiness_matches_naive_on_permuted_projection() {
    let x = random_matrix(200, 6, 21);
    let y = project_array(x.view(), &DrParams::with_algorithm(Algorithm::Pca)).unwrap();
    let mut perm: Vec<usize> = (0..200).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(0));
    let y = y.select(Axis(0), &perm);
    let ours = trustworthiness(x.view(), y.view(), 10).unwrap();
    let naive = naive_trustworthiness(x.view(), y.view(), 10);
    assert!((ours - naive).abs() <= 1e-12, "{ours} vs {naive}");
}

#[test]
fn hdbscan_two_blobs_recovers_construction() {
    let (x, truth) = two_blobs(50, 2, 20.0, 0);
    let out = hdbscan(x.view(), &ClusterParams::new(10)).unwrap();
    assert_eq!(out.n_clusters, 2);
    assert_eq!(adjusted_rand_index(&out.labels, &truth), 1.0);
}

#[test]
fn ari_oracle_sanity() {
    assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 3, 3]), 1.0);
    assert!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) < 0.0);
}

fn points(max: usize) -> impl Strategy<Value = Array2<f64>> {
    (3usize..=max, any::<u64>()).prop_map(|(m, seed)| random_matrix(m, 2, seed) * 10.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn silhouette_matches_naive(x in points(300), k in 2i64..6, noise in 0usize..4, seed in any::<u64>()) {
        let m = x.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<i64> = (0..m).map(|i| i as i64 % k).collect();
        labels.shuffle(&mut rng);
        for l in labels.iter_mut().take(noise.min(m - 2)) {
            *l = -1;
        }
        let distinct: std::collections::BTreeSet<_> = labels.iter().filter(|&&l| l >= 0).collect();
        prop_assume!(distinct.len() >= 2);
        let ours = silhouette_score(x.view(), &labels).unwrap();
        let naive = naive_silhouette(x.view(), &labels);
        prop_assert!((ours - naive).abs() <= 1e-10, "{} vs {}", ours, naive);
        prop_assert!((-1.0..=1.0).contains(&ours));
    }

    #[test]
    fn mst_weight_matches_kruskal(x in points(50), ms in 1usize..6) {
        let edges = mutual_reachability_mst(x.view(), ms).unwrap();
        prop_assert_eq!(edges.len(), x.nrows() - 1);
        let ours: f64 = edges.iter().map(|e| e.weight).sum();
        let oracle = kruskal_mreach_weight(x.view(), ms);
        prop_assert!((ours - oracle).abs() <= 1e-9 * oracle.max(1.0));
    }

    #[test]
    fn hdbscan_invariant_to_permutation_translation_scaling(
        x in points(120), seed in any::<u64>(), shift in -100.0f64..100.0, scale in 0.1f64..50.0
    ) {
        let params = ClusterParams::new(5);
        let base = hdbscan(x.view(), &params).unwrap();

        let moved = x.mapv(|v| v * scale + shift);
        prop_assert!(same_partition(&base.labels, &hdbscan(moved.view(), &params).unwrap().labels));

        let mut perm: Vec<usize> = (0..x.nrows()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let permuted = hdbscan(x.select(Axis(0), &perm).view(), &params).unwrap();
        let unpermuted: Vec<i64> = {
            let mut l = vec![0; perm.len()];
            for (new, &old) in perm.iter().enumerate() {
                l[old] = permuted.labels[new];
            }
            l
        };
        prop_assert!(same_partition(&base.labels, &unpermuted));
    }
}
