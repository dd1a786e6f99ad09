//! Time-indexed multichannel series, decimating resampler, sliding windows,
//! min/max display bucketing and the point/window index mapping.

use std::ops::Range;

use ndarray::Array2;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::{Fingerprint, FingerprintBuilder};

/// Default display cap, in points per channel.
pub const DISPLAY_CAP: usize = 10_000;

const NANOS_PER_SECOND: i64 = 1_000_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("series must contain at least one row")]
    Empty,
    #[error("series must contain at least one channel")]
    NoChannels,
    #[error("channel `{name}` has {got} values, expected {expected}")]
    LengthMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("timestamps are not strictly increasing at row {row}")]
    NonMonotoneTimestamps { row: usize },
    #[error("window size {window} exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(&'static str),
    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
}

/// Sampling period in seconds, kept as an exact rational.
pub type Period = Ratio<u64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub values: Vec<f64>,
}

impl Channel {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

/// A validated time series. Timestamps are epoch nanoseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    name: String,
    timestamps: Vec<i64>,
    channels: Vec<Channel>,
    frequency: Option<Period>,
}

impl TimeSeries {
    pub fn new(
        name: impl Into<String>,
        timestamps: Vec<i64>,
        channels: Vec<Channel>,
        frequency: Option<Period>,
    ) -> Result<Self, SeriesError> {
        if timestamps.is_empty() {
            return Err(SeriesError::Empty);
        }
        if channels.is_empty() {
            return Err(SeriesError::NoChannels);
        }
        for ch in &channels {
            if ch.values.len() != timestamps.len() {
                return Err(SeriesError::LengthMismatch {
                    name: ch.name.clone(),
                    expected: timestamps.len(),
                    got: ch.values.len(),
                });
            }
        }
        if let Some(row) = timestamps.windows(2).position(|w| w[0] >= w[1]) {
            return Err(SeriesError::NonMonotoneTimestamps { row: row + 1 });
        }
        if frequency.is_some_and(|f| *f.numer() == 0) {
            return Err(SeriesError::InvalidParam("frequency must be positive"));
        }
        Ok(Self {
            name: name.into(),
            timestamps,
            channels,
            frequency,
        })
    }

    /// Regular series starting at `start_ns` with the given whole-second period.
    pub fn regular(
        name: impl Into<String>,
        start_ns: i64,
        period_seconds: u64,
        channels: Vec<Channel>,
    ) -> Result<Self, SeriesError> {
        let n = channels.first().map_or(0, |c| c.values.len());
        let step = period_seconds as i64 * NANOS_PER_SECOND;
        let timestamps = (0..n as i64).map(|i| start_ns + i * step).collect();
        Self::new(
            name,
            timestamps,
            channels,
            Some(Period::from_integer(period_seconds)),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn frequency(&self) -> Option<Period> {
        self.frequency
    }

    pub fn frequency_seconds(&self) -> Option<f64> {
        self.frequency
            .map(|f| *f.numer() as f64 / *f.denom() as f64)
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let mut b = FingerprintBuilder::new("series");
        b.update(self.name.as_bytes()).update(&[0]);
        b.update_i64s(&self.timestamps);
        for ch in &self.channels {
            b.update(ch.name.as_bytes()).update(&[0]);
            b.update_f64s(&ch.values);
        }
        if let Some(f) = self.frequency {
            b.update(&f.numer().to_le_bytes()).update(&f.denom().to_le_bytes());
        }
        b.finish()
    }

    /// Rows with timestamps in `[start_ns, end_ns]`, or `None` when that is empty.
    pub fn slice_time(&self, start_ns: i64, end_ns: i64) -> Option<(Range<usize>, TimeSeries)> {
        let lo = self.timestamps.partition_point(|&t| t < start_ns);
        let hi = self.timestamps.partition_point(|&t| t <= end_ns);
        if lo >= hi {
            return None;
        }
        let channels = self
            .channels
            .iter()
            .map(|c| Channel::new(c.name.clone(), c.values[lo..hi].to_vec()))
            .collect();
        let sliced = TimeSeries {
            name: self.name.clone(),
            timestamps: self.timestamps[lo..hi].to_vec(),
            channels,
            frequency: self.frequency,
        };
        Some((lo..hi, sliced))
    }
}

/// Keep every `factor`-th row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleSpec {
    pub factor: usize,
}

impl ResampleSpec {
    pub fn new(factor: usize) -> Result<Self, SeriesError> {
        if factor == 0 {
            return Err(SeriesError::InvalidParam("frequency factor must be >= 1"));
        }
        Ok(Self { factor })
    }
}

/// Length of a series of `n` rows after decimation by `factor`.
pub fn resampled_len(n: usize, factor: usize) -> usize {
    if n == 0 {
        0
    } else {
        (n - 1) / factor + 1
    }
}

/// Decimates `series`, keeping rows `0, k, 2k, ...`. The declared period is
/// multiplied by `k`.
pub fn resample(series: &TimeSeries, spec: ResampleSpec) -> Result<TimeSeries, SeriesError> {
    let k = spec.factor;
    if k == 0 {
        return Err(SeriesError::InvalidParam("frequency factor must be >= 1"));
    }
    if k == 1 {
        return Ok(series.clone());
    }
    let timestamps = series.timestamps.iter().step_by(k).copied().collect();
    let channels = series
        .channels
        .iter()
        .map(|c| Channel::new(c.name.clone(), c.values.iter().step_by(k).copied().collect()))
        .collect();
    Ok(TimeSeries {
        name: series.name.clone(),
        timestamps,
        channels,
        frequency: series.frequency.map(|f| f * Period::from_integer(k as u64)),
    })
}

/// Shape of a sliding-window view: window size, stride, window count and
/// source length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowGeometry {
    pub window: usize,
    pub stride: usize,
    pub count: usize,
    pub source_len: usize,
}

impl WindowGeometry {
    pub fn new(source_len: usize, window: usize, stride: usize) -> Result<Self, SeriesError> {
        if window == 0 {
            return Err(SeriesError::InvalidParam("window size must be >= 1"));
        }
        if stride == 0 {
            return Err(SeriesError::InvalidParam("stride must be >= 1"));
        }
        if window > source_len {
            return Err(SeriesError::WindowTooLarge {
                window,
                len: source_len,
            });
        }
        Ok(Self {
            window,
            stride,
            count: (source_len - window) / stride + 1,
            source_len,
        })
    }

    /// Inclusive time-index range covered by window `i`.
    pub fn window_range(&self, i: usize) -> Result<(usize, usize), SeriesError> {
        if i >= self.count {
            return Err(SeriesError::IndexOutOfRange {
                index: i,
                bound: self.count,
            });
        }
        let start = i * self.stride;
        Ok((start, start + self.window - 1))
    }

    /// Windows containing time index `t`, as a contiguous index range.
    ///
    /// The range is empty when `t` falls in a gap between strided windows.
    pub fn windows_containing(&self, t: usize) -> Result<Range<usize>, SeriesError> {
        if t >= self.source_len {
            return Err(SeriesError::IndexOutOfRange {
                index: t,
                bound: self.source_len,
            });
        }
        Ok(self.windows_overlapping(t, t))
    }

    /// Windows intersecting the inclusive time-index range `[start, end]`.
    pub fn windows_overlapping(&self, start: usize, end: usize) -> Range<usize> {
        // i*stride <= end  and  i*stride + w - 1 >= start
        let first = (start + 1).saturating_sub(self.window).div_ceil(self.stride);
        let last = (end / self.stride).min(self.count.saturating_sub(1));
        if first > last {
            first..first
        } else {
            first..last + 1
        }
    }
}

/// Sliding-window view materialized as a row-major matrix.
///
/// Row `i` is the concatenation, channel by channel, of the `window` values
/// starting at row `i * stride` of the source.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowMatrix {
    pub data: Array2<f64>,
    pub geometry: WindowGeometry,
    pub channel_count: usize,
    pub fingerprint: Fingerprint,
}

impl WindowMatrix {
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn window(&self) -> usize {
        self.geometry.window
    }
}

pub fn sliding_windows(
    series: &TimeSeries,
    window: usize,
    stride: usize,
) -> Result<WindowMatrix, SeriesError> {
    sliding_windows_with_source(series, window, stride, series.fingerprint())
}

/// As [`sliding_windows`], with a precomputed fingerprint of `series`.
pub fn sliding_windows_with_source(
    series: &TimeSeries,
    window: usize,
    stride: usize,
    source: Fingerprint,
) -> Result<WindowMatrix, SeriesError> {
    let geometry = WindowGeometry::new(series.len(), window, stride)?;
    let c = series.channel_count();
    let width = window * c;
    let mut data = Array2::<f64>::zeros((geometry.count, width));
    for (i, mut row) in data.outer_iter_mut().enumerate() {
        let start = i * stride;
        let row = row.as_slice_mut().expect("standard layout");
        for (ch, chunk) in series.channels.iter().zip(row.chunks_exact_mut(window)) {
            chunk.copy_from_slice(&ch.values[start..start + window]);
        }
    }
    let fingerprint = Fingerprint::of_params(
        "windows",
        &(source.to_hex(), window as u64, stride as u64),
    );
    Ok(WindowMatrix {
        data,
        geometry,
        channel_count: c,
        fingerprint,
    })
}

/// Inclusive time-index range of window `i`.
pub fn window_range_for_point(
    i: usize,
    geometry: &WindowGeometry,
) -> Result<(usize, usize), SeriesError> {
    geometry.window_range(i)
}

/// Window indices whose span contains time index `t`.
pub fn point_indices_for_time(
    t: usize,
    geometry: &WindowGeometry,
) -> Result<Range<usize>, SeriesError> {
    geometry.windows_containing(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayChannel {
    pub name: String,
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
}

impl DisplayChannel {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Series reduced for plotting: at most `cap` points per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplaySeries {
    pub cap: usize,
    pub source_len: usize,
    pub bucketed: bool,
    pub channels: Vec<DisplayChannel>,
}

/// Min/max bucketing for display.
///
/// Series of at most `cap` rows are returned unchanged. Longer series are
/// cut into `cap / 2` contiguous buckets of `ceil(n / (cap / 2))` rows; for
/// every channel each bucket contributes its minimum and its maximum, in
/// time order. NaN values are skipped; an all-NaN bucket emits a single NaN
/// point so the gap survives.
pub fn downsample_display(series: &TimeSeries, cap: usize) -> Result<DisplaySeries, SeriesError> {
    if cap < 2 || !cap.is_multiple_of(2) {
        return Err(SeriesError::InvalidParam("display cap must be even and >= 2"));
    }
    let n = series.len();
    if n <= cap {
        let channels = series
            .channels
            .iter()
            .map(|c| DisplayChannel {
                name: c.name.clone(),
                timestamps: series.timestamps.clone(),
                values: c.values.clone(),
            })
            .collect();
        return Ok(DisplaySeries {
            cap,
            source_len: n,
            bucketed: false,
            channels,
        });
    }

    let bucket = n.div_ceil(cap / 2);
    let channels = series
        .channels
        .iter()
        .map(|c| {
            let mut timestamps = Vec::with_capacity(cap);
            let mut values = Vec::with_capacity(cap);
            for start in (0..n).step_by(bucket) {
                let end = (start + bucket).min(n);
                let mut lo: Option<usize> = None;
                let mut hi: Option<usize> = None;
                for i in start..end {
                    let v = c.values[i];
                    if v.is_nan() {
                        continue;
                    }
                    if lo.is_none_or(|j| v < c.values[j]) {
                        lo = Some(i);
                    }
                    if hi.is_none_or(|j| v > c.values[j]) {
                        hi = Some(i);
                    }
                }
                match (lo, hi) {
                    (Some(a), Some(b)) => {
                        let (first, second) = if a <= b { (a, b) } else { (b, a) };
                        timestamps.push(series.timestamps[first]);
                        values.push(c.values[first]);
                        if second != first {
                            timestamps.push(series.timestamps[second]);
                            values.push(c.values[second]);
                        }
                    }
                    _ => {
                        timestamps.push(series.timestamps[start]);
                        values.push(f64::NAN);
                    }
                }
            }
            DisplayChannel {
                name: c.name.clone(),
                timestamps,
                values,
            }
        })
        .collect();
    Ok(DisplaySeries {
        cap,
        source_len: n,
        bucketed: true,
        channels,
    })
}
