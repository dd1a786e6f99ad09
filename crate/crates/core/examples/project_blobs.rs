//! PCA, UMAP, t-SNE and PCA→UMAP on two Gaussian blobs, scored by the
//! true-label silhouette and trustworthiness.
//!
//! cargo run --release --example project_blobs

use std::time::Instant;

use dvats::clustering::silhouette_score;
use dvats::projection::{project_array, trustworthiness, Algorithm, DrParams};
use dvats::synthetic::two_blobs;

fn main() {
    for (alg, per_blob) in [
        (Algorithm::Pca, 500),
        (Algorithm::Umap, 500),
        (Algorithm::PcaThenUmap, 500),
        (Algorithm::Tsne, 100),
    ] {
        let (x, labels) = two_blobs(per_blob, 10, 10.0, 0);
        let t = Instant::now();
        let y = project_array(x.view(), &DrParams::with_algorithm(alg)).unwrap();
        let secs = t.elapsed().as_secs_f64();
        println!(
            "{:<14} m={:<5} silhouette={:.4} trustworthiness(15)={:.4} {secs:.2}s",
            alg.as_str(),
            x.nrows(),
            silhouette_score(y.view(), &labels).unwrap(),
            trustworthiness(x.view(), y.view(), 15).unwrap()
        );
    }

    let big = ndarray::Array2::<f64>::zeros((6_000, 2));
    let err = project_array(big.view(), &DrParams::with_algorithm(Algorithm::Tsne)).unwrap_err();
    println!("t-SNE on 6000 points: {err}");
}
