//! A reduced scalability scenario; `dvats bench run` runs the full one.
//!
//! cargo run --release --example bench_scenario [length]

use std::sync::Arc;

use dvats::bench::{render_report, run_scenario, timings_from_csv, timings_to_csv, DatasetSource, Scenario};
use dvats::cache::ReactiveCache;
use dvats::pipeline::Pipeline;
use dvats::projection::{Algorithm, DrParams};
use dvats::store::ArtifactStore;

fn main() -> anyhow::Result<()> {
    let len: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(500_000);
    let dir = tempfile::tempdir()?;
    let store = Arc::new(ArtifactStore::open(dir.path())?);
    let dataset = DatasetSource::Synthetic { len, seed: 0 }.materialize(&store)?;
    let pipeline = Pipeline::new(store, Arc::new(ReactiveCache::default()));

    let scenario = Scenario {
        factors: vec![15, 75, 150],
        dr: vec![DrParams::with_algorithm(Algorithm::Umap), DrParams::with_algorithm(Algorithm::Pca)],
        repetitions: 2,
        max_points: 3_000,
        ..Scenario::new(dataset)
    };
    let rows = run_scenario(&pipeline, &scenario)?;
    let report = render_report(&rows);
    print!("{report}");

    let csv = timings_to_csv(&rows)?;
    println!("\n{} CSV rows; report from CSV identical: {}", rows.len(), render_report(&timings_from_csv(&csv)?) == report);
    Ok(())
}
