//! Window encoders: window matrix in, embedding matrix out.
//!
//! Encoders work row by row, so the windows are processed in chunks of
//! `chunk_size` rows and chunks may run in parallel. Each output row depends
//! only on its input row, which makes the result independent of the chunk
//! size and of scheduling.

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::columnar::{Column, ColumnData, Table};
use crate::fingerprint::Fingerprint;
use crate::series::WindowMatrix;

pub const DEFAULT_CHUNK_SIZE: usize = 8_192;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncoderError {
    #[error("encoder expects rows of width {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("pool size {pool} does not divide window size {window}")]
    NonDivisiblePool { pool: usize, window: usize },
    #[error("invalid encoder configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EncoderVariant {
    /// Embedding equals the window.
    Identity,
    /// Non-overlapping means of `pool` consecutive values, per channel.
    Meanpool { pool: usize },
    /// Projection onto `dim` Gaussian directions drawn from `seed`.
    Randproj { dim: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub variant: EncoderVariant,
    #[serde(default = "default_chunk_size")]
    pub chunk_size: usize,
}

fn default_chunk_size() -> usize {
    DEFAULT_CHUNK_SIZE
}

impl EncoderConfig {
    pub fn new(variant: EncoderVariant) -> Self {
        Self {
            variant,
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }

    pub fn with_chunk_size(mut self, chunk_size: usize) -> Self {
        self.chunk_size = chunk_size;
        self
    }
}

/// A deterministic window encoder.
pub trait Encoder: Sync {
    /// Validates the encoder against the window shape and builds the
    /// per-row kernel.
    fn prepare(&self, window: usize, channels: usize) -> Result<Box<dyn RowEncoder + '_>, EncoderError>;

    /// Canonical identity of the encoder, hashed into embedding fingerprints.
    fn fingerprint(&self) -> Fingerprint;
}

/// Per-row kernel produced by [`Encoder::prepare`].
pub trait RowEncoder: Sync {
    fn dim(&self) -> usize;

    /// Encodes one flattened window (channel-major) into `out`.
    fn encode_row(&self, row: &[f64], out: &mut [f64]);
}

struct IdentityRows(usize);

impl RowEncoder for IdentityRows {
    fn dim(&self) -> usize {
        self.0
    }

    fn encode_row(&self, row: &[f64], out: &mut [f64]) {
        out.copy_from_slice(row);
    }
}

struct MeanpoolRows {
    pool: usize,
    dim: usize,
}

impl RowEncoder for MeanpoolRows {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_row(&self, row: &[f64], out: &mut [f64]) {
        // Blocks never straddle channels because pool divides the window.
        for (o, block) in out.iter_mut().zip(row.chunks_exact(self.pool)) {
            *o = block.iter().sum::<f64>() / self.pool as f64;
        }
    }
}

/// `row · G / sqrt(dim)` with `G[r][c] = gaussian(seed, r·dim + c)`.
struct RandprojRows {
    dim: usize,
    matrix: Vec<f64>,
}

impl RowEncoder for RandprojRows {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_row(&self, row: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (&x, g) in row.iter().zip(self.matrix.chunks_exact(self.dim)) {
            for (o, &gv) in out.iter_mut().zip(g) {
                *o += x * gv;
            }
        }
        let scale = 1.0 / (self.dim as f64).sqrt();
        out.iter_mut().for_each(|o| *o *= scale);
    }
}

impl Encoder for EncoderVariant {
    fn prepare(&self, window: usize, channels: usize) -> Result<Box<dyn RowEncoder + '_>, EncoderError> {
        let width = window * channels;
        match *self {
            EncoderVariant::Identity => Ok(Box::new(IdentityRows(width))),
            EncoderVariant::Meanpool { pool } => {
                if pool == 0 || !window.is_multiple_of(pool) {
                    return Err(EncoderError::NonDivisiblePool { pool, window });
                }
                Ok(Box::new(MeanpoolRows {
                    pool,
                    dim: window / pool * channels,
                }))
            }
            EncoderVariant::Randproj { dim, seed } => {
                if dim == 0 || dim > width {
                    return Err(EncoderError::InvalidConfig(format!(
                        "randproj dimension {dim} must be in 1..={width}"
                    )));
                }
                let matrix = (0..(width * dim) as u64).map(|i| gaussian(seed, i)).collect();
                Ok(Box::new(RandprojRows { dim, matrix }))
            }
        }
    }

    fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of_params("encoder", self)
    }
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output for position `counter` of the stream keyed by `seed`:
/// the state is `seed + (counter + 1) * 0x9e3779b97f4a7c15` (wrapping),
/// finalized with the standard SplitMix64 mixer.
pub fn counter_u64(seed: u64, counter: u64) -> u64 {
    let mut z = seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform in `[0, 1)` from the top 53 bits of [`counter_u64`].
fn counter_unit(seed: u64, counter: u64) -> f64 {
    (counter_u64(seed, counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal variate number `index` for `seed`.
///
/// Variates come in Box-Muller pairs: pair `p = index / 2` draws
/// `u1 = unit(2p)`, `u2 = unit(2p + 1)` and yields
/// `r·cos(2π·u2)` for even indices and `r·sin(2π·u2)` for odd ones, with
/// `r = sqrt(-2·ln(1 - u1))`.
pub fn gaussian(seed: u64, index: u64) -> f64 {
    let pair = index / 2;
    let u1 = counter_unit(seed, 2 * pair);
    let u2 = counter_unit(seed, 2 * pair + 1);
    let r = (-2.0 * (1.0 - u1).ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    if index.is_multiple_of(2) {
        r * theta.cos()
    } else {
        r * theta.sin()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub data: Array2<f64>,
    pub fingerprint: Fingerprint,
}

impl EmbeddingMatrix {
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// One float64 column `e<j>` per embedding dimension.
    pub fn to_table(&self) -> Table {
        Table::new(
            self.data
                .axis_iter(Axis(1))
                .enumerate()
                .map(|(j, col)| Column::f64(format!("e{j}"), col.to_vec()))
                .collect(),
        )
    }

    /// Imports externally produced embeddings (e.g. from a trained model).
    pub fn from_table(table: &Table) -> Result<Self, EncoderError> {
        let rows = table.n_rows();
        let cols = table.columns.len();
        if cols == 0 {
            return Err(EncoderError::InvalidConfig("embedding table has no columns".into()));
        }
        let mut data = Array2::zeros((rows, cols));
        for (j, col) in table.columns.iter().enumerate() {
            let ColumnData::Float64(values) = &col.data else {
                return Err(EncoderError::InvalidConfig(format!(
                    "embedding column `{}` is not float64",
                    col.name
                )));
            };
            data.column_mut(j).iter_mut().zip(values).for_each(|(d, v)| *d = *v);
        }
        let mut hasher = crate::fingerprint::FingerprintBuilder::new("embeddings-import");
        hasher.update(&(rows as u64).to_le_bytes());
        hasher.update_f64s(data.as_slice().expect("standard layout"));
        Ok(Self {
            data,
            fingerprint: hasher.finish(),
        })
    }
}

pub fn encode_windows(
    windows: &WindowMatrix,
    config: &EncoderConfig,
) -> Result<EmbeddingMatrix, EncoderError> {
    encode_with(&config.variant, windows, config.chunk_size)
}

/// Encodes with any [`Encoder`], `chunk_size` windows at a time.
pub fn encode_with<E: Encoder + ?Sized>(
    encoder: &E,
    windows: &WindowMatrix,
    chunk_size: usize,
) -> Result<EmbeddingMatrix, EncoderError> {
    if chunk_size == 0 {
        return Err(EncoderError::InvalidConfig("chunk_size must be >= 1".into()));
    }
    let w = windows.window();
    let c = windows.channel_count;
    let width = windows.data.ncols();
    if width != w * c {
        return Err(EncoderError::ShapeMismatch {
            expected: w * c,
            got: width,
        });
    }
    let kernel = encoder.prepare(w, c)?;
    let dim = kernel.dim();
    let m = windows.rows();
    let mut out = Array2::<f64>::zeros((m, dim));
    let input = windows.data.as_slice().expect("standard layout");
    let output = out.as_slice_mut().expect("standard layout");

    if m > 0 {
        output
            .par_chunks_mut(chunk_size * dim)
            .zip(input.par_chunks(chunk_size * width))
            .for_each(|(out_chunk, in_chunk)| {
                for (o, i) in out_chunk.chunks_exact_mut(dim).zip(in_chunk.chunks_exact(width)) {
                    kernel.encode_row(i, o);
                }
            });
    }

    let fingerprint = Fingerprint::combine(
        "embed",
        &[windows.fingerprint],
        &encoder.fingerprint(),
    );
    Ok(EmbeddingMatrix {
        data: out,
        fingerprint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{sliding_windows, Channel, TimeSeries};
    use proptest::prelude::*;

    fn windows(values: Vec<f64>, w: usize) -> WindowMatrix {
        let s = TimeSeries::regular("s", 0, 1, vec![Channel::new("v", values)]).unwrap();
        sliding_windows(&s, w, 1).unwrap()
    }

    #[test]
    fn identity_copies_rows() {
        let wm = windows(vec![1.0, 2.0, 3.0, 4.0, 5.0], 3);
        let e = encode_windows(&wm, &EncoderConfig::new(EncoderVariant::Identity)).unwrap();
        assert_eq!(e.data, wm.data);
    }

    #[test]
    fn meanpool_hand_values() {
        let wm = windows(vec![1.0, 3.0, 5.0, 7.0], 4);
        let e = encode_windows(&wm, &EncoderConfig::new(EncoderVariant::Meanpool { pool: 2 })).unwrap();
        assert_eq!(e.data.row(0).to_vec(), vec![2.0, 6.0]);
    }

    #[test]
    fn meanpool_pool_must_divide_window() {
        let wm = windows(vec![1.0; 10], 5);
        assert_eq!(
            encode_windows(&wm, &EncoderConfig::new(EncoderVariant::Meanpool { pool: 2 })).unwrap_err(),
            EncoderError::NonDivisiblePool { pool: 2, window: 5 }
        );
    }

    #[test]
    fn randproj_dimension_bounds() {
        let wm = windows(vec![1.0; 10], 4);
        assert!(encode_windows(&wm, &EncoderConfig::new(EncoderVariant::Randproj { dim: 5, seed: 1 })).is_err());
        let e = encode_windows(&wm, &EncoderConfig::new(EncoderVariant::Randproj { dim: 3, seed: 1 })).unwrap();
        assert_eq!(e.dim(), 3);
    }

    #[test]
    fn gaussian_stream_is_pinned() {
        // Frozen values: any change to the generator changes stored embeddings.
        assert_eq!(counter_u64(0, 0), 0xe220_a839_7b1d_cdaf);
        let g: Vec<f64> = (0..4).map(|i| gaussian(42, i)).collect();
        let again: Vec<f64> = (0..4).map(|i| gaussian(42, i)).collect();
        assert_eq!(g, again);
    }

    #[test]
    fn gaussian_moments() {
        let n = 200_000u64;
        let xs: Vec<f64> = (0..n).map(|i| gaussian(7, i)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn fingerprint_ignores_chunk_size() {
        let wm = windows((0..20).map(f64::from).collect(), 4);
        let a = encode_windows(&wm, &EncoderConfig::new(EncoderVariant::Identity).with_chunk_size(1)).unwrap();
        let b = encode_windows(&wm, &EncoderConfig::new(EncoderVariant::Identity).with_chunk_size(5)).unwrap();
        assert_eq!(a.fingerprint, b.fingerprint);
        let c = encode_windows(&wm, &EncoderConfig::new(EncoderVariant::Meanpool { pool: 2 })).unwrap();
        assert_ne!(a.fingerprint, c.fingerprint);
    }

    #[test]
    fn table_round_trip() {
        let wm = windows((0..20).map(f64::from).collect(), 4);
        let e = encode_windows(&wm, &EncoderConfig::new(EncoderVariant::Meanpool { pool: 2 })).unwrap();
        let back = EmbeddingMatrix::from_table(&e.to_table()).unwrap();
        assert_eq!(back.data, e.data);
    }

    proptest! {
        #[test]
        fn chunking_is_invisible(values in prop::collection::vec(-100.0f64..100.0, 8..120), chunk in 1usize..40, seed in any::<u64>()) {
            let wm = windows(values, 8);
            for variant in [EncoderVariant::Identity, EncoderVariant::Meanpool { pool: 4 }, EncoderVariant::Randproj { dim: 3, seed }] {
                let whole = encode_windows(&wm, &EncoderConfig::new(variant).with_chunk_size(wm.rows())).unwrap();
                let chunked = encode_windows(&wm, &EncoderConfig::new(variant).with_chunk_size(chunk)).unwrap();
                let bits = |e: &EmbeddingMatrix| e.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(&whole), bits(&chunked));
            }
        }

        #[test]
        fn meanpool_one_is_identity(values in prop::collection::vec(-100.0f64..100.0, 5..60)) {
            let wm = windows(values, 5);
            let a = encode_windows(&wm, &EncoderConfig::new(EncoderVariant::Identity)).unwrap();
            let b = encode_windows(&wm, &EncoderConfig::new(EncoderVariant::Meanpool { pool: 1 })).unwrap();
            prop_assert_eq!(a.data, b.data);
        }
    }
}
