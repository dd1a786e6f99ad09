//! Scalability harness: resample across frequency factors, run the full
//! pipeline for each, and report per-stage wall times.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::Stage;
use crate::clustering::ClusterParams;
use crate::encoder::{EncoderConfig, EncoderVariant};
use crate::pipeline::{DatasetRef, Pipeline, PipelineError, PipelineRequest};
use crate::projection::{Algorithm, DrParams};
use crate::series::resampled_len;
use crate::store::{ArtifactStore, StoreError};
use crate::synthetic::solar_like;

pub const TIMINGS_FILE: &str = "timings.csv";
pub const REPORT_FILE: &str = "report.txt";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("bad dataset reference `{0}`")]
    BadDatasetRef(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `name`, `name@version`, or `synthetic:N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSource {
    Stored(DatasetRef),
    Synthetic { len: usize, seed: u64 },
}

impl FromStr for DatasetSource {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BenchError::BadDatasetRef(s.to_string());
        if let Some(n) = s.strip_prefix("synthetic:") {
            let len = n.replace('_', "").parse().map_err(|_| bad())?;
            return Ok(DatasetSource::Synthetic { len, seed: 0 });
        }
        match s.split_once('@') {
            Some((name, v)) => Ok(DatasetSource::Stored(DatasetRef {
                name: name.to_string(),
                version: Some(v.trim_start_matches('v').parse().map_err(|_| bad())?),
            })),
            None if !s.is_empty() => Ok(DatasetSource::Stored(DatasetRef::latest(s))),
            None => Err(bad()),
        }
    }
}

impl DatasetSource {
    /// Stores synthetic data if needed and returns a reference to it.
    pub fn materialize(&self, store: &ArtifactStore) -> Result<DatasetRef, BenchError> {
        match self {
            DatasetSource::Stored(r) => Ok(r.clone()),
            DatasetSource::Synthetic { len, seed } => {
                let name = format!("synthetic_solar_{len}");
                if let Ok(a) = store.artifact_meta(crate::store::ArtifactKind::Dataset, &name, None) {
                    if a.metadata.get("seed").map(String::as_str) == Some(&seed.to_string()) {
                        return Ok(DatasetRef::latest(name));
                    }
                }
                let mut meta = BTreeMap::new();
                meta.insert("generator".into(), "solar_like".into());
                meta.insert("seed".into(), seed.to_string());
                let a = store.put_series(&name, &solar_like(*len, *seed), &meta)?;
                Ok(DatasetRef {
                    name,
                    version: Some(a.version),
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub dataset: DatasetRef,
    pub factors: Vec<usize>,
    pub window: usize,
    pub encoder: EncoderConfig,
    pub dr: Vec<DrParams>,
    pub clustering: Option<ClusterParams>,
    pub repetitions: usize,
    /// Upper bound on projected windows; the stride grows to respect it.
    pub max_points: usize,
}

impl Scenario {
    pub fn new(dataset: DatasetRef) -> Self {
        Scenario {
            dataset,
            factors: vec![1, 5, 15, 75, 150],
            window: 48,
            encoder: EncoderConfig::new(EncoderVariant::Meanpool { pool: 4 }),
            dr: vec![DrParams::with_algorithm(Algorithm::Umap)],
            clustering: Some(ClusterParams::new(10)),
            repetitions: 1,
            max_points: 10_000,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidScenario(m.to_string()));
        if self.factors.is_empty() {
            return bad("frequency factors must not be empty");
        }
        if self.factors[0] == 0 || self.factors.windows(2).any(|w| w[0] >= w[1]) {
            return bad("frequency factors must be positive and strictly increasing");
        }
        if self.dr.is_empty() {
            return bad("at least one projection configuration is required");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be >= 1");
        }
        if self.max_points == 0 || self.window == 0 {
            return bad("window and max_points must be >= 1");
        }
        Ok(())
    }

    /// Smallest stride that keeps the window count within `max_points`.
    pub fn stride_for(&self, len: usize) -> usize {
        if len < self.window {
            return 1;
        }
        (len - self.window + 1).div_ceil(self.max_points).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub factor: usize,
    pub stage: Stage,
    /// Series length after resampling.
    pub elements: usize,
    /// Microsecond resolution.
    pub wall_seconds: f64,
    pub compute_count: u64,
    pub dr: Algorithm,
    pub repetition: usize,
    /// Projected windows (0 before the windows stage).
    pub points: usize,
    pub error: Option<String>,
}

fn quantize(seconds: f64) -> f64 {
    (seconds * 1e6).round() / 1e6
}

/// Runs every (factor, projection) pair, cold cache per factor, then the
/// warm repetitions.
pub fn run_scenario(pipeline: &Pipeline, scenario: &Scenario) -> Result<Vec<StageTiming>, BenchError> {
    scenario.validate()?;
    let meta = pipeline.dataset_meta(&scenario.dataset)?;
    let n: usize = meta
        .metadata
        .get("rows")
        .and_then(|r| r.parse().ok())
        .ok_or_else(|| BenchError::InvalidScenario("dataset metadata lacks `rows`".into()))?;
    let dataset = DatasetRef {
        name: meta.name.clone(),
        version: Some(meta.version),
    };

    let mut rows = Vec::new();
    for &factor in &scenario.factors {
        pipeline.cache().clear();
        let elements = resampled_len(n, factor);
        let stride = scenario.stride_for(elements);
        for repetition in 1..=scenario.repetitions {
            for dr in &scenario.dr {
                let req = PipelineRequest {
                    dataset: dataset.clone(),
                    resample_factor: factor,
                    window: scenario.window,
                    stride,
                    encoder: scenario.encoder,
                    dr: *dr,
                    clustering: scenario.clustering,
                    threads: Default::default(),
                };
                let points = if elements >= scenario.window {
                    (elements - scenario.window) / stride + 1
                } else {
                    0
                };
                let mut trace = Vec::new();
                let started = Instant::now();
                let outcome = pipeline.run_traced(&req, &mut trace);
                let total = started.elapsed().as_secs_f64();
                let row = |stage: Stage, seconds: f64, computed: bool, error: Option<String>| StageTiming {
                    factor,
                    stage,
                    elements,
                    wall_seconds: quantize(seconds),
                    compute_count: computed as u64,
                    dr: dr.algorithm,
                    repetition,
                    points: if stage == Stage::Load { 0 } else { points },
                    error,
                };
                for r in &trace {
                    rows.push(row(r.stage, r.seconds, r.computed, None));
                }
                if let Err(e) = outcome {
                    let done: BTreeSet<Stage> = trace.iter().map(|r| r.stage).collect();
                    let stage = e
                        .failed_stage()
                        .or_else(|| Stage::ALL.into_iter().find(|s| !done.contains(s)))
                        .unwrap_or(Stage::Load);
                    let spent: f64 = trace.iter().map(|r| r.seconds).sum();
                    tracing::warn!(factor, stage = %stage, error = %e, "bench stage failed");
                    rows.push(row(stage, (total - spent).max(0.0), false, Some(e.to_string())));
                }
            }
        }
    }
    Ok(rows)
}

pub fn timings_to_csv(rows: &[StageTiming]) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn timings_from_csv(text: &str) -> Result<Vec<StageTiming>, BenchError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Text report: per projection algorithm, stages as rows and frequency
/// factors as columns (cold runs), then each column as a percentage of its
/// total, then compute counts of the warm repetitions.
pub fn render_report(rows: &[StageTiming]) -> String {
    let mut out = String::new();
    let factors: BTreeSet<usize> = rows.iter().map(|r| r.factor).collect();
    let factors: Vec<usize> = factors.into_iter().collect();
    let elements: BTreeMap<usize, usize> = rows.iter().map(|r| (r.factor, r.elements)).collect();
    let points: BTreeMap<usize, usize> = rows.iter().map(|r| (r.factor, r.points)).fold(BTreeMap::new(), |mut m, (f, p)| {
        let e = m.entry(f).or_insert(0);
        *e = (*e).max(p);
        m
    });

    let header = |out: &mut String, label: &str| {
        let _ = write!(out, "{label:<12}");
        for f in &factors {
            let _ = write!(out, "{:>14}", format!("k={f}"));
        }
        out.push('\n');
    };

    out.push_str("Resampled series\n");
    header(&mut out, "");
    let _ = write!(out, "{:<12}", "elements");
    for f in &factors {
        let _ = write!(out, "{:>14}", elements[f]);
    }
    out.push('\n');
    let _ = write!(out, "{:<12}", "points");
    for f in &factors {
        let _ = write!(out, "{:>14}", points[f]);
    }
    out.push('\n');

    let algorithms: BTreeSet<&str> = rows.iter().map(|r| r.dr.as_str()).collect();
    for alg in algorithms {
        let mut secs: BTreeMap<(Stage, usize), f64> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.repetition == 1 && r.dr.as_str() == alg) {
            *secs.entry((r.stage, r.factor)).or_insert(0.0) += r.wall_seconds;
        }
        let totals: Vec<f64> = factors
            .iter()
            .map(|f| Stage::ALL.iter().map(|s| secs.get(&(*s, *f)).copied().unwrap_or(0.0)).sum())
            .collect();

        let _ = write!(out, "\nTime (seconds), projection = {alg}\n");
        header(&mut out, "stage");
        for s in Stage::ALL {
            let _ = write!(out, "{:<12}", s.as_str());
            for f in &factors {
                let _ = write!(out, "{:>14.6}", secs.get(&(s, *f)).copied().unwrap_or(0.0));
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<12}", "total");
        for t in &totals {
            let _ = write!(out, "{t:>14.6}");
        }
        out.push('\n');

        let _ = write!(out, "\n% relative to total, projection = {alg}\n");
        header(&mut out, "stage");
        for s in Stage::ALL {
            let _ = write!(out, "{:<12}", s.as_str());
            for (f, t) in factors.iter().zip(&totals) {
                let v = secs.get(&(s, *f)).copied().unwrap_or(0.0);
                let pct = if *t > 0.0 { 100.0 * v / t } else { 0.0 };
                let _ = write!(out, "{pct:>14.2}");
            }
            out.push('\n');
        }
    }

    let warm: Vec<&StageTiming> = rows.iter().filter(|r| r.repetition > 1).collect();
    if !warm.is_empty() {
        out.push_str("\nWarm repetitions: stage computes\n");
        header(&mut out, "stage");
        for s in Stage::ALL {
            let _ = write!(out, "{:<12}", s.as_str());
            for f in &factors {
                let c: u64 = warm.iter().filter(|r| r.stage == s && r.factor == *f).map(|r| r.compute_count).sum();
                let _ = write!(out, "{c:>14}");
            }
            out.push('\n');
        }
    }

    let errors: Vec<&StageTiming> = rows.iter().filter(|r| r.error.is_some()).collect();
    if !errors.is_empty() {
        out.push_str("\nErrors\n");
        for r in errors {
            let _ = writeln!(
                out,
                "k={} {} {}: {}",
                r.factor,
                r.dr.as_str(),
                r.stage,
                r.error.as_deref().unwrap_or_default()
            );
        }
    }
    out
}

/// Percentage table parsed back out of a rendered report: one vector of
/// column values per algorithm block.
pub fn percentage_columns(report: &str) -> Vec<Vec<f64>> {
    let mut blocks = Vec::new();
    let mut lines = report.lines();
    while let Some(line) = lines.next() {
        if !line.starts_with("% relative to total") {
            continue;
        }
        let header = lines.next().unwrap_or_default();
        let cols = header.split_whitespace().count() - 1;
        let mut sums = vec![Vec::new(); cols];
        for _ in Stage::ALL {
            let row: Vec<f64> = lines
                .next()
                .unwrap_or_default()
                .split_whitespace()
                .skip(1)
                .filter_map(|v| v.parse().ok())
                .collect();
            for (c, v) in row.into_iter().enumerate() {
                sums[c].push(v);
            }
        }
        blocks.push(sums.into_iter().map(|c| c.iter().sum()).collect());
    }
    blocks
}

/// Writes `timings.csv` and `report.txt` under `dir`.
pub fn write_report(dir: &Path, rows: &[StageTiming]) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(TIMINGS_FILE), timings_to_csv(rows)?)?;
    std::fs::write(dir.join(REPORT_FILE), render_report(rows))?;
    Ok(())
}
