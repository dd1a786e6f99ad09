//! A parameter walk through the cached pipeline, printing which stages
//! recompute after each change.
//!
//! cargo run --release --example reactive_pipeline

use std::collections::BTreeMap;
use std::sync::Arc;

use dvats::cache::{CacheStats, ReactiveCache, Stage};
use dvats::clustering::ClusterParams;
use dvats::encoder::{EncoderConfig, EncoderVariant};
use dvats::pipeline::{DatasetRef, Pipeline, PipelineRequest, SelectionRequest};
use dvats::projection::DrParams;
use dvats::store::ArtifactStore;
use dvats::synthetic::solar_like;

fn show(label: &str, before: &CacheStats, after: &CacheStats) {
    let d = after.compute_delta(before);
    let changed: Vec<&str> = Stage::ALL.iter().filter(|s| d[**s as usize] > 0).map(|s| s.as_str()).collect();
    println!("{label:<28} recomputed {changed:?}");
}

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let store = Arc::new(ArtifactStore::open(dir.path())?);
    store.put_series("solar", &solar_like(40_000, 1), &BTreeMap::new())?;
    store.put_series("solar_b", &solar_like(40_000, 2), &BTreeMap::new())?;
    let pipeline = Pipeline::new(store, Arc::new(ReactiveCache::default()));

    let mut req = PipelineRequest {
        resample_factor: 15,
        stride: 2,
        encoder: EncoderConfig::new(EncoderVariant::Meanpool { pool: 4 }),
        clustering: Some(ClusterParams::new(10)),
        ..PipelineRequest::new(DatasetRef::latest("solar"), 48)
    };

    let mut walk: Vec<(&str, Box<dyn Fn(&mut PipelineRequest)>)> = vec![
        ("first run", Box::new(|_| {})),
        ("same request", Box::new(|_| {})),
        ("min_cluster_size 10 -> 20", Box::new(|r| r.clustering = Some(ClusterParams::new(20)))),
        ("min_dist 0.1 -> 0.3", Box::new(|r| r.dr = DrParams { min_dist: 0.3, ..r.dr })),
        ("window 48 -> 24", Box::new(|r| r.window = 24)),
        ("dataset solar -> solar_b", Box::new(|r| r.dataset = DatasetRef::latest("solar_b"))),
    ];
    let mut last = None;
    for (label, change) in walk.drain(..) {
        change(&mut req);
        let before = pipeline.cache().stats();
        let run = pipeline.run(&req)?;
        show(label, &before, &pipeline.cache().stats());
        last = Some(run);
    }

    let run = last.unwrap();
    println!(
        "\n{} points, {} clusters, silhouette {:?}",
        run.points(),
        run.clusters.as_ref().unwrap().n_clusters,
        run.clusters.as_ref().unwrap().score
    );
    let sel = pipeline.resolve_selection(&run, &SelectionRequest::PointsToTime { indices: vec![3, 4] })?;
    println!("points {{3, 4}} -> {sel:?}");
    let sel = pipeline.resolve_selection(&run, &SelectionRequest::TimeToPoints { start: 50, end: 50 })?;
    println!("time 50 -> {sel:?}");

    println!("\n{:<8} {:>8} {:>6} {:>10}", "stage", "computes", "hits", "last s");
    for s in pipeline.cache().stats().stages {
        println!("{:<8} {:>8} {:>6} {:>10.4}", s.stage.as_str(), s.compute_count, s.hit_count, s.last_compute_seconds);
    }
    Ok(())
}
