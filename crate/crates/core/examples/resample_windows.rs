//! Decimation, sliding windows, window/time mapping and display bucketing on
//! a synthetic 4-second solar-like series.
//!
//! cargo run --release --example resample_windows

use dvats::series::{
    downsample_display, point_indices_for_time, resample, resampled_len, sliding_windows, window_range_for_point,
    ResampleSpec, DISPLAY_CAP,
};
use dvats::synthetic::{solar_like, SOLAR_FULL_LENGTH};

fn main() {
    println!("resampled lengths of a {SOLAR_FULL_LENGTH}-row series:");
    for k in [1, 5, 15, 75, 150] {
        println!("  k = {k:>3} ({:>4} s) -> {:>9}", 4 * k, resampled_len(SOLAR_FULL_LENGTH, k));
    }

    let series = solar_like(200_000, 7);
    let coarse = resample(&series, ResampleSpec::new(15).unwrap()).unwrap();
    println!(
        "\n{} rows every {:?} s -> {} rows every {:?} s",
        series.len(),
        series.frequency_seconds(),
        coarse.len(),
        coarse.frequency_seconds()
    );

    let windows = sliding_windows(&coarse, 48, 1).unwrap();
    let g = &windows.geometry;
    println!("{} windows of width {} (stride {})", windows.rows(), g.window, g.stride);
    println!("  point 5 covers time indices {:?}", window_range_for_point(5, g).unwrap());
    println!("  time index 100 lies in windows {:?}", point_indices_for_time(100, g).unwrap());

    let shown = downsample_display(&series, DISPLAY_CAP).unwrap();
    let ch = &shown.channels[0];
    let peak = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "\ndisplay: {} -> {} points (bucketed: {}), peak kept: {}",
        shown.source_len,
        ch.len(),
        shown.bucketed,
        peak(&ch.values) == peak(&series.channels()[0].values)
    );
}
