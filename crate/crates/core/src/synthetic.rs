//! Seeded generators for benchmarks, examples and tests.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::series::{Channel, TimeSeries};

/// Sampling period of the solar-like generator, in seconds.
pub const SOLAR_PERIOD_SECONDS: u64 = 4;
/// Length of the full 4-second solar recording.
pub const SOLAR_FULL_LENGTH: usize = 7_397_222;

const DAY_SECONDS: f64 = 86_400.0;
const PEAK_MW: f64 = 100.0;

/// Solar-like power curve: a clipped daily sinusoid (zero at night) with
/// multiplicative cloud noise and additive sensor noise, sampled every 4 s
/// starting 2019-08-01T00:00:00Z.
pub fn solar_like(len: usize, seed: u64) -> TimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sensor = Normal::new(0.0, 0.5).expect("valid normal");
    let cloud = Normal::new(0.0, 0.02).expect("valid normal");
    let mut cover = 1.0f64;
    let values: Vec<f64> = (0..len)
        .map(|i| {
            let t = (i as u64 * SOLAR_PERIOD_SECONDS) as f64;
            let phase = 2.0 * std::f64::consts::PI * (t / DAY_SECONDS);
            let sun = (-phase.cos()).max(0.0);
            cover = (cover + cloud.sample(&mut rng)).clamp(0.3, 1.0);
            (PEAK_MW * sun * cover + sensor.sample(&mut rng)).max(0.0)
        })
        .collect();
    TimeSeries::regular(
        "solar_synthetic",
        1_564_617_600_000_000_000,
        SOLAR_PERIOD_SECONDS,
        vec![Channel::new("power_mw", values)],
    )
    .expect("generated series is valid")
}

/// Two isotropic unit-variance Gaussian blobs in `dim` dimensions whose
/// centers are `separation` standard deviations apart. Rows alternate
/// blocks: the first `n_per` belong to blob 0.
pub fn two_blobs(n_per: usize, dim: usize, separation: f64, seed: u64) -> (Array2<f64>, Vec<i64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let offset = separation / (dim as f64).sqrt();
    let mut x = Array2::zeros((2 * n_per, dim));
    let mut labels = Vec::with_capacity(2 * n_per);
    for i in 0..2 * n_per {
        let blob = (i >= n_per) as usize;
        for j in 0..dim {
            x[[i, j]] = normal.sample(&mut rng) + blob as f64 * offset;
        }
        labels.push(blob as i64);
    }
    (x, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solar_shape() {
        let s = solar_like(50_000, 1);
        assert_eq!(s.len(), 50_000);
        assert_eq!(s.frequency_seconds(), Some(4.0));
        let v = &s.channels()[0].values;
        assert!(v.iter().all(|x| x.is_finite() && *x >= 0.0));
        // Midnight is dark, noon is bright.
        assert!(v[0] < 5.0);
        assert!(v[10_800] > 20.0);
        assert_eq!(solar_like(1000, 1), solar_like(1000, 1));
    }

    #[test]
    fn blob_centers() {
        let (x, labels) = two_blobs(2000, 10, 10.0, 0);
        let mean = |b: i64| {
            let rows: Vec<_> = (0..x.nrows()).filter(|&i| labels[i] == b).collect();
            let mut c = vec![0.0; 10];
            for &i in &rows {
                for j in 0..10 {
                    c[j] += x[[i, j]] / rows.len() as f64;
                }
            }
            c
        };
        let (a, b) = (mean(0), mean(1));
        let d: f64 = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!((d - 10.0).abs() < 0.3, "center distance {d}");
    }
}
