//! The three window encoders and their chunking invariance.
//!
//! cargo run --release --example encode_windows

use dvats::encoder::{encode_windows, EncoderConfig, EncoderVariant};
use dvats::series::sliding_windows;
use dvats::synthetic::solar_like;

fn main() {
    let series = solar_like(50_000, 1);
    let windows = sliding_windows(&series, 48, 4).unwrap();
    println!("{} windows x {} values", windows.rows(), windows.data.ncols());

    let variants = [
        EncoderVariant::Identity,
        EncoderVariant::Meanpool { pool: 4 },
        EncoderVariant::Randproj { dim: 8, seed: 42 },
    ];
    for v in variants {
        let base = encode_windows(&windows, &EncoderConfig::new(v)).unwrap();
        let same = [1, 7, 1024, windows.rows()].into_iter().all(|c| {
            encode_windows(&windows, &EncoderConfig::new(v).with_chunk_size(c)).unwrap().data == base.data
        });
        println!(
            "{:<40} dim={:<3} fp={} chunk-invariant={same}",
            serde_json::to_string(&v).unwrap(),
            base.dim(),
            base.fingerprint.short()
        );
    }

    match encode_windows(&windows, &EncoderConfig::new(EncoderVariant::Meanpool { pool: 5 })) {
        Err(e) => println!("meanpool(5) on w=48: {e}"),
        Ok(_) => unreachable!(),
    }
}
