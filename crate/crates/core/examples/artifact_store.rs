//! Versioned artifact store and the columnar file format.
//!
//! cargo run --example artifact_store

use std::collections::BTreeMap;

use dvats::columnar::{read_columnar, write_columnar, Column, Table};
use dvats::store::{ArtifactKind, ArtifactStore};
use dvats::synthetic::solar_like;

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let store = ArtifactStore::open(dir.path())?;

    let series = solar_like(20_000, 3);
    let mut meta = BTreeMap::new();
    meta.insert("source".to_string(), "synthetic".to_string());
    let v1 = store.put_series("solar", &series, &meta)?;
    let again = store.put_series("solar", &series, &meta)?;
    let v2 = store.put_series("solar", &solar_like(20_000, 4), &meta)?;
    println!("v{} id={} ({} bytes)", v1.version, v1.id.short(), v1.size);
    println!("same payload -> v{} (deduplicated)", again.version);
    println!("new payload  -> v{}", v2.version);

    let (_, back) = store.get_series("solar", Some(1))?;
    println!("round trip equal: {}", back == series);

    for a in store.list(None)? {
        println!("  {}/{}/v{} {:?}", a.kind.as_str(), a.name, a.version, a.metadata);
    }

    let table = Table::new(vec![
        Column::i64("id", vec![1, 2, 3]),
        Column::f64("x", vec![0.5, f64::NAN, f64::NEG_INFINITY]),
    ]);
    let mut bytes = write_columnar(&table)?;
    println!("\ncolumnar: {} bytes, magic {:?}", bytes.len(), std::str::from_utf8(&bytes[..4])?);
    println!("bit-exact: {}", read_columnar(&bytes)?.bit_eq(&table));
    bytes[30] ^= 0x01;
    println!("flipped bit -> {}", read_columnar(&bytes).unwrap_err());

    store.put_artifact(ArtifactKind::Projections, "demo", &write_columnar(&table)?, &BTreeMap::new())?;
    let meta = store.artifact_meta(ArtifactKind::Projections, "demo", None)?;
    println!("projections/demo latest = v{}", meta.version);
    Ok(())
}
