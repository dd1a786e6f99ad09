//! load → windows → embed → project → cluster → display, every stage
//! memoized in a [`ReactiveCache`].

use std::sync::Arc;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{CacheWeight, NodeKey, ReactiveCache, Stage};
use crate::clustering::{cluster_and_score, ClusterLabels, ClusterParams};
use crate::encoder::{encode_windows, Encoder, EncoderConfig, EncoderVariant};
use crate::fingerprint::Fingerprint;
use crate::projection::{project_with_threads, DrParams, ProjectionMatrix, Threads};
use crate::series::{
    downsample_display, resample, resampled_len, sliding_windows_with_source, DisplaySeries, ResampleSpec,
    TimeSeries, WindowGeometry, DISPLAY_CAP,
};
use crate::store::{Artifact, ArtifactKind, ArtifactStore, StoreError};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("dataset `{name}` (version {version:?}) not found")]
    DatasetNotFound { name: String, version: Option<u32> },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("stage `{stage}` failed: {source}")]
    StageFailed {
        stage: Stage,
        #[source]
        source: BoxError,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl PipelineError {
    fn stage(stage: Stage) -> impl FnOnce(BoxError) -> PipelineError {
        move |source| PipelineError::StageFailed { stage, source }
    }

    pub fn failed_stage(&self) -> Option<Stage> {
        match self {
            PipelineError::StageFailed { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

fn boxed<E: std::error::Error + Send + Sync + 'static>(e: E) -> BoxError {
    Box::new(e)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DatasetRef {
    pub name: String,
    /// `None` selects the latest version.
    #[serde(default)]
    pub version: Option<u32>,
}

impl DatasetRef {
    pub fn latest(name: impl Into<String>) -> Self {
        DatasetRef {
            name: name.into(),
            version: None,
        }
    }
}

fn one() -> usize {
    1
}

fn default_encoder() -> EncoderConfig {
    EncoderConfig::new(EncoderVariant::Identity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRequest {
    pub dataset: DatasetRef,
    #[serde(default = "one")]
    pub resample_factor: usize,
    pub window: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "default_encoder")]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub dr: DrParams,
    /// `None` skips clustering.
    #[serde(default)]
    pub clustering: Option<ClusterParams>,
    #[serde(default)]
    pub threads: Threads,
}

impl PipelineRequest {
    pub fn new(dataset: DatasetRef, window: usize) -> Self {
        PipelineRequest {
            dataset,
            resample_factor: 1,
            window,
            stride: 1,
            encoder: default_encoder(),
            dr: DrParams::default(),
            clustering: None,
            threads: Threads::Auto,
        }
    }

    /// Checks every parameter against the dataset's recorded shape.
    pub fn validate(&self, dataset: &Artifact) -> Result<WindowGeometry, PipelineError> {
        let invalid = |m: String| PipelineError::Invalid(m);
        let meta_usize = |key: &str| -> Result<usize, PipelineError> {
            dataset
                .metadata
                .get(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| invalid(format!("dataset metadata lacks `{key}`")))
        };
        let rows = meta_usize("rows")?;
        let channels = meta_usize("channels")?;
        if self.resample_factor == 0 {
            return Err(invalid("resample_factor must be >= 1".into()));
        }
        let n = resampled_len(rows, self.resample_factor);
        let geometry = WindowGeometry::new(n, self.window, self.stride).map_err(|e| invalid(e.to_string()))?;
        self.encoder
            .variant
            .prepare(self.window, channels)
            .map_err(|e| invalid(e.to_string()))?;
        if self.encoder.chunk_size == 0 {
            return Err(invalid("chunk_size must be >= 1".into()));
        }
        self.dr.validate(geometry.count).map_err(|e| invalid(e.to_string()))?;
        if let Some(cp) = &self.clustering {
            cp.validate().map_err(|e| invalid(e.to_string()))?;
        }
        Ok(geometry)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Viewport {
    pub start_ns: i64,
    pub end_ns: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DisplayParams {
    pub cap: usize,
    pub viewport: Option<Viewport>,
}

impl Default for DisplayParams {
    fn default() -> Self {
        DisplayParams {
            cap: DISPLAY_CAP,
            viewport: None,
        }
    }
}

impl DisplayParams {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.cap < 2 || self.cap > DISPLAY_CAP || !self.cap.is_multiple_of(2) {
            return Err(PipelineError::Invalid(format!(
                "display cap must be even and in 2..={DISPLAY_CAP}, got {}",
                self.cap
            )));
        }
        if let Some(v) = self.viewport {
            if v.start_ns > v.end_ns {
                return Err(PipelineError::Invalid("viewport start is after its end".into()));
            }
        }
        Ok(())
    }
}

/// What the UI draws: the bucketed series plus at most `cap` projection
/// points. `point_indices[k]` is the true window index of point `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayPayload {
    pub series: DisplaySeries,
    pub viewport: Option<Viewport>,
    pub total_points: usize,
    pub point_indices: Vec<usize>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub labels: Option<Vec<i64>>,
}

impl CacheWeight for DisplayPayload {
    fn weight_bytes(&self) -> usize {
        self.series.weight_bytes() + 24 * self.point_indices.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub seconds: f64,
    pub computed: bool,
    pub fingerprint: Fingerprint,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub request: PipelineRequest,
    pub dataset: Artifact,
    pub series: Arc<TimeSeries>,
    pub geometry: WindowGeometry,
    pub embedding_dim: usize,
    pub projection: Arc<ProjectionMatrix>,
    pub clusters: Option<Arc<ClusterLabels>>,
    pub display: Arc<DisplayPayload>,
    pub stages: Vec<StageRecord>,
}

impl PipelineRun {
    pub fn points(&self) -> usize {
        self.projection.rows()
    }

    pub fn fingerprint(&self, stage: Stage) -> Option<Fingerprint> {
        self.stages.iter().find(|r| r.stage == stage).map(|r| r.fingerprint)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "direction", rename_all = "snake_case")]
pub enum SelectionRequest {
    /// Projection point indices to the time spans of their windows.
    PointsToTime { indices: Vec<usize> },
    /// Inclusive time-index range to the windows overlapping it.
    TimeToPoints { start: usize, end: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionResponse {
    /// Merged inclusive index ranges with their timestamps.
    TimeRanges {
        ranges: Vec<[usize; 2]>,
        timestamps: Vec<[i64; 2]>,
    },
    Points { indices: Vec<usize> },
}

/// Resolves a brush on one view into the other view's coordinates.
pub fn resolve_selection(
    geometry: &WindowGeometry,
    timestamps: &[i64],
    sel: &SelectionRequest,
) -> Result<SelectionResponse, PipelineError> {
    match sel {
        SelectionRequest::PointsToTime { indices } => {
            let mut spans = Vec::with_capacity(indices.len());
            for &i in indices {
                spans.push(geometry.window_range(i).map_err(|e| PipelineError::Invalid(e.to_string()))?);
            }
            spans.sort_unstable();
            let mut ranges: Vec<[usize; 2]> = Vec::new();
            for (a, b) in spans {
                match ranges.last_mut() {
                    Some(last) if a <= last[1] + 1 => last[1] = last[1].max(b),
                    _ => ranges.push([a, b]),
                }
            }
            let timestamps = ranges.iter().map(|r| [timestamps[r[0]], timestamps[r[1]]]).collect();
            Ok(SelectionResponse::TimeRanges { ranges, timestamps })
        }
        SelectionRequest::TimeToPoints { start, end } => {
            if start > end || *end >= geometry.source_len {
                return Err(PipelineError::Invalid(format!(
                    "time range [{start}, {end}] outside 0..{}",
                    geometry.source_len
                )));
            }
            Ok(SelectionResponse::Points {
                indices: geometry.windows_overlapping(*start, *end).collect(),
            })
        }
    }
}

/// Runs pipeline requests against an artifact store through a shared cache.
#[derive(Debug, Clone)]
pub struct Pipeline {
    store: Arc<ArtifactStore>,
    cache: Arc<ReactiveCache>,
}

fn load_params(factor: usize) -> Fingerprint {
    Fingerprint::of_params("load", &serde_json::json!({ "resample_factor": factor }))
}

impl Pipeline {
    pub fn new(store: Arc<ArtifactStore>, cache: Arc<ReactiveCache>) -> Self {
        Pipeline { store, cache }
    }

    pub fn store(&self) -> &Arc<ArtifactStore> {
        &self.store
    }

    pub fn cache(&self) -> &Arc<ReactiveCache> {
        &self.cache
    }

    /// Dataset artifact metadata, mapping a missing artifact to
    /// [`PipelineError::DatasetNotFound`].
    pub fn dataset_meta(&self, r: &DatasetRef) -> Result<Artifact, PipelineError> {
        match self.store.artifact_meta(ArtifactKind::Dataset, &r.name, r.version) {
            Ok(a) => Ok(a),
            Err(StoreError::NotFound { .. } | StoreError::InvalidName(_)) => Err(PipelineError::DatasetNotFound {
                name: r.name.clone(),
                version: r.version,
            }),
            Err(e) => Err(e.into()),
        }
    }

    fn stage<T, F>(&self, key: NodeKey, trace: &mut Vec<StageRecord>, compute: F) -> Result<Arc<T>, PipelineError>
    where
        T: CacheWeight + Send + Sync + 'static,
        F: FnOnce() -> Result<T, BoxError>,
    {
        let stage = key.stage;
        let fingerprint = key.output_fingerprint();
        let start = Instant::now();
        let mut computed = false;
        let out = self.cache.get_or_compute(key, || {
            computed = true;
            compute()
        });
        let seconds = start.elapsed().as_secs_f64();
        let value = out.map_err(PipelineError::stage(stage))?;
        trace.push(StageRecord {
            stage,
            seconds,
            computed,
            fingerprint,
        });
        Ok(value)
    }

    pub fn run(&self, req: &PipelineRequest) -> Result<PipelineRun, PipelineError> {
        self.run_traced(req, &mut Vec::new())
    }

    /// As [`Pipeline::run`], appending a record per finished stage to
    /// `trace` as it goes, so a failure still leaves the earlier timings.
    pub fn run_traced(&self, req: &PipelineRequest, trace: &mut Vec<StageRecord>) -> Result<PipelineRun, PipelineError> {
        let dataset = self.dataset_meta(&req.dataset)?;
        let geometry = req.validate(&dataset)?;
        let start_len = trace.len();

        let load_key = NodeKey::new(Stage::Load, vec![dataset.id], load_params(req.resample_factor));
        let load_fp = load_key.output_fingerprint();
        let series: Arc<TimeSeries> = self.stage(load_key, trace, || {
            let (_, s) = self.store.get_series(&req.dataset.name, Some(dataset.version)).map_err(boxed)?;
            let spec = ResampleSpec::new(req.resample_factor).map_err(boxed)?;
            resample(&s, spec).map_err(boxed)
        })?;

        let windows_key = NodeKey::new(
            Stage::Windows,
            vec![load_fp],
            Fingerprint::of_params("windows", &(req.window, req.stride)),
        );
        let windows_fp = windows_key.output_fingerprint();
        let windows = self.stage(windows_key, trace, || {
            sliding_windows_with_source(&series, req.window, req.stride, load_fp).map_err(boxed)
        })?;

        // chunk_size does not change the output, so it stays out of the key.
        let embed_key = NodeKey::new(Stage::Embed, vec![windows_fp], req.encoder.variant.fingerprint());
        let embed_fp = embed_key.output_fingerprint();
        let embedding = self.stage(embed_key, trace, || encode_windows(&windows, &req.encoder).map_err(boxed))?;
        let embedding_dim = embedding.dim();
        drop(windows);

        let project_key = NodeKey::new(Stage::Project, vec![embed_fp], req.dr.fingerprint());
        let project_fp = project_key.output_fingerprint();
        let projection = self.stage(project_key, trace, || {
            project_with_threads(&embedding, &req.dr, req.threads).map_err(boxed)
        })?;
        drop(embedding);

        let clusters = match &req.clustering {
            None => None,
            Some(cp) => {
                let key = NodeKey::new(Stage::Cluster, vec![project_fp], Fingerprint::of_params("cluster", cp));
                Some(self.stage(key, trace, || cluster_and_score(projection.coords.view(), cp).map_err(boxed))?)
            }
        };

        let display = self.display_inner(
            &series,
            load_fp,
            &projection,
            project_fp,
            clusters.as_deref(),
            trace.iter().find(|r| r.stage == Stage::Cluster).map(|r| r.fingerprint),
            req.dr.random_state,
            DisplayParams::default(),
            trace,
        )?;

        Ok(PipelineRun {
            request: req.clone(),
            dataset,
            series,
            geometry,
            embedding_dim,
            projection,
            clusters,
            display,
            stages: trace[start_len..].to_vec(),
        })
    }

    /// Display payload for a finished run, optionally zoomed.
    pub fn display(&self, run: &PipelineRun, params: DisplayParams) -> Result<Arc<DisplayPayload>, PipelineError> {
        params.validate()?;
        self.display_inner(
            &run.series,
            run.fingerprint(Stage::Load).expect("load ran"),
            &run.projection,
            run.fingerprint(Stage::Project).expect("project ran"),
            run.clusters.as_deref(),
            run.fingerprint(Stage::Cluster),
            run.request.dr.random_state,
            params,
            &mut Vec::new(),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn display_inner(
        &self,
        series: &TimeSeries,
        load_fp: Fingerprint,
        projection: &ProjectionMatrix,
        project_fp: Fingerprint,
        clusters: Option<&ClusterLabels>,
        cluster_fp: Option<Fingerprint>,
        seed: u64,
        params: DisplayParams,
        trace: &mut Vec<StageRecord>,
    ) -> Result<Arc<DisplayPayload>, PipelineError> {
        let mut inputs = vec![load_fp, project_fp];
        inputs.extend(cluster_fp);
        let key = NodeKey::new(Stage::Display, inputs, Fingerprint::of_params("display", &(params, seed)));
        self.stage(key, trace, || {
            let shown = match params.viewport {
                None => downsample_display(series, params.cap),
                Some(v) => match series.slice_time(v.start_ns, v.end_ns) {
                    Some((_, s)) => downsample_display(&s, params.cap),
                    None => return Err("viewport contains no rows".into()),
                },
            }
            .map_err(boxed)?;
            let m = projection.rows();
            let point_indices: Vec<usize> = if m <= params.cap {
                (0..m).collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut idx = sample(&mut rng, m, params.cap).into_vec();
                idx.sort_unstable();
                idx
            };
            Ok(DisplayPayload {
                series: shown,
                viewport: params.viewport,
                total_points: m,
                x: point_indices.iter().map(|&i| projection.coords[[i, 0]]).collect(),
                y: point_indices.iter().map(|&i| projection.coords[[i, 1]]).collect(),
                labels: clusters.map(|c| point_indices.iter().map(|&i| c.labels[i]).collect()),
                point_indices,
            })
        })
    }

    pub fn resolve_selection(&self, run: &PipelineRun, sel: &SelectionRequest) -> Result<SelectionResponse, PipelineError> {
        resolve_selection(&run.geometry, run.series.timestamps(), sel)
    }
}
