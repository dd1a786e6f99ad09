//! HDBSCAN on projected points and silhouette scoring.
//!
//! cargo run --release --example cluster_hdbscan

use dvats::clustering::{cluster_and_score, hdbscan, silhouette_score, ClusterParams};
use dvats::projection::{project_array, Algorithm, DrParams};
use dvats::synthetic::two_blobs;
use ndarray::array;

fn main() {
    let triples = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [100.0, 0.0], [101.0, 0.0], [100.0, 1.0]];
    let out = hdbscan(triples.view(), &ClusterParams::new(3).with_min_samples(2)).unwrap();
    println!("two triples -> {:?}", out.labels);

    let pairs = array![[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
    println!("silhouette of two pairs = {:.5}", silhouette_score(pairs.view(), &[0, 0, 1, 1]).unwrap());

    let (x, truth) = two_blobs(50, 2, 20.0, 0);
    let out = hdbscan(x.view(), &ClusterParams::new(10)).unwrap();
    let noise = out.labels.iter().filter(|&&l| l < 0).count();
    let agree = out.labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
    println!("50+50 blobs: {} clusters, {noise} noise, {agree}/100 match construction", out.n_clusters);

    let (x, _) = two_blobs(500, 10, 10.0, 0);
    let y = project_array(x.view(), &DrParams::with_algorithm(Algorithm::Umap)).unwrap();
    let scored = cluster_and_score(y.view(), &ClusterParams::new(15)).unwrap();
    println!(
        "UMAP of 1000 blob points: {} clusters, cluster score {:?}",
        scored.n_clusters,
        scored.score.map(|s| (s * 1e4).round() / 1e4)
    );
}
