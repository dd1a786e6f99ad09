//! HTTP API over the pipeline.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/datasets` | dataset artifacts |
//! | POST | `/datasets` | multipart upload (`file`, optional `name`) of csv/txt/tsf |
//! | POST | `/pipeline` | start a run; `202` with its id, or `200` with `?wait=true` |
//! | GET | `/pipeline/{id}` | run status and summary; `500` names the failed stage |
//! | GET | `/pipeline/{id}/display` | series and projection, at most `cap` points each |
//! | POST | `/pipeline/{id}/selection` | points → time ranges, or time range → points |
//! | GET | `/logs` | cache counters and recent stage timings |
//! | GET | `/artifacts/{kind}/{name}/{version}/meta` | artifact metadata |
//!
//! `/display` answers with the columnar format (x, y, point_index, label
//! columns) when the request's `Accept` header is [`COLUMNAR_MIME`].

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cache::{CacheStats, ReactiveCache, Stage, DEFAULT_BUDGET_BYTES};
use crate::columnar::{write_columnar, Column, Table};
use crate::fingerprint::Fingerprint;
use crate::ingest::parse_by_extension;
use crate::pipeline::{
    DisplayParams, Pipeline, PipelineError, PipelineRequest, PipelineRun, SelectionRequest, StageRecord, Viewport,
};
use crate::series::DISPLAY_CAP;
use crate::store::{Artifact, ArtifactKind, ArtifactStore, StoreError};

pub const COLUMNAR_MIME: &str = "application/x-dvats-columnar";
const LOG_CAPACITY: usize = 1_000;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub store_root: PathBuf,
    pub cache_budget_bytes: usize,
    pub display_cap: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            store_root: PathBuf::from("dvats-store"),
            cache_budget_bytes: DEFAULT_BUDGET_BYTES,
            display_cap: DISPLAY_CAP,
        }
    }
}

#[derive(Debug, Clone)]
enum RunStatus {
    Running,
    Done(Arc<PipelineRun>),
    Failed { stage: Option<Stage>, message: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct LogRow {
    pub run: String,
    #[serde(flatten)]
    pub record: StageRecord,
}

pub struct AppState {
    pipeline: Pipeline,
    runs: Mutex<HashMap<String, RunStatus>>,
    log: Mutex<VecDeque<LogRow>>,
    display_cap: usize,
}

impl AppState {
    pub fn new(pipeline: Pipeline, display_cap: usize) -> Arc<Self> {
        Arc::new(AppState {
            pipeline,
            runs: Mutex::new(HashMap::new()),
            log: Mutex::new(VecDeque::new()),
            display_cap: display_cap.min(DISPLAY_CAP),
        })
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    fn set_status(&self, id: &str, status: RunStatus) {
        self.runs.lock().unwrap_or_else(|e| e.into_inner()).insert(id.to_string(), status);
    }

    fn status(&self, id: &str) -> Option<RunStatus> {
        self.runs.lock().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    fn record(&self, id: &str, stages: &[StageRecord]) {
        let mut log = self.log.lock().unwrap_or_else(|e| e.into_inner());
        for r in stages {
            log.push_back(LogRow {
                run: id.to_string(),
                record: r.clone(),
            });
        }
        while log.len() > LOG_CAPACITY {
            log.pop_front();
        }
    }

    /// Runs synchronously and records the outcome under `id`.
    fn execute(&self, id: &str, req: &PipelineRequest) -> RunStatus {
        let mut trace = Vec::new();
        let status = match self.pipeline.run_traced(req, &mut trace) {
            Ok(run) => RunStatus::Done(Arc::new(run)),
            Err(e) => {
                tracing::warn!(run = id, error = %e, "pipeline run failed");
                RunStatus::Failed {
                    stage: e.failed_stage(),
                    message: e.to_string(),
                }
            }
        };
        self.record(id, &trace);
        self.set_status(id, status.clone());
        status
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    stage: Option<Stage>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            stage: None,
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, message)
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(stage) = self.stage {
            body["stage"] = json!(stage);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match &e {
            PipelineError::DatasetNotFound { .. } => ApiError::not_found(e.to_string()),
            PipelineError::Invalid(_) => ApiError::unprocessable(e.to_string()),
            PipelineError::StageFailed { stage, .. } => ApiError {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                stage: Some(*stage),
                message: e.to_string(),
            },
            PipelineError::Store(s) => s.into(),
        }
    }
}

impl From<&StoreError> for ApiError {
    fn from(e: &StoreError) -> Self {
        match e {
            StoreError::NotFound { .. } | StoreError::InvalidName(_) => ApiError::not_found(e.to_string()),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        (&e).into()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/datasets", get(list_datasets).post(upload_dataset))
        .route("/pipeline", post(start_pipeline))
        .route("/pipeline/{id}", get(get_pipeline))
        .route("/pipeline/{id}/display", get(get_display))
        .route("/pipeline/{id}/selection", post(post_selection))
        .route("/logs", get(get_logs))
        .route("/artifacts/{kind}/{name}/{version}/meta", get(get_artifact_meta))
        .layer(DefaultBodyLimit::max(512 << 20))
        .with_state(state)
}

pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let store = Arc::new(ArtifactStore::open(&config.store_root)?);
    let cache = Arc::new(ReactiveCache::new(config.cache_budget_bytes));
    let state = AppState::new(Pipeline::new(store, cache), config.display_cap);
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, store = %config.store_root.display(), "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn list_datasets(State(state): State<Arc<AppState>>) -> ApiResult<Json<Vec<Artifact>>> {
    let store = state.pipeline.store().clone();
    let list = tokio::task::spawn_blocking(move || store.list(Some(ArtifactKind::Dataset)))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(list))
}

fn sanitize(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.') { c } else { '_' })
        .collect();
    s.trim_start_matches('.').to_string()
}

async fn upload_dataset(
    State(state): State<Arc<AppState>>,
    mut multipart: Multipart,
) -> ApiResult<(StatusCode, Json<Vec<Artifact>>)> {
    let mut file: Option<(String, Vec<u8>)> = None;
    let mut name: Option<String> = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::unprocessable(e.to_string()))?
    {
        match field.name() {
            Some("file") => {
                let file_name = field.file_name().unwrap_or("upload.csv").to_string();
                let bytes = field.bytes().await.map_err(|e| ApiError::unprocessable(e.to_string()))?;
                file = Some((file_name, bytes.to_vec()));
            }
            Some("name") => {
                name = Some(field.text().await.map_err(|e| ApiError::unprocessable(e.to_string()))?);
            }
            _ => {}
        }
    }
    let (file_name, bytes) = file.ok_or_else(|| ApiError::unprocessable("multipart field `file` is required"))?;
    let store = state.pipeline.store().clone();
    let stored = tokio::task::spawn_blocking(move || -> ApiResult<Vec<Artifact>> {
        let parsed = parse_by_extension(&file_name, &bytes).map_err(|e| ApiError::unprocessable(e.to_string()))?;
        let base = sanitize(name.as_deref().unwrap_or(&parsed.name));
        if base.is_empty() {
            return Err(ApiError::unprocessable("dataset name is empty"));
        }
        let mut meta = BTreeMap::new();
        meta.insert("source_file".to_string(), file_name.replace(['\n', '\r'], " "));
        meta.insert("source_format".to_string(), format!("{:?}", parsed.source_format).to_lowercase());
        let many = parsed.series.len() > 1;
        parsed
            .series
            .iter()
            .map(|s| {
                let n = if many { format!("{base}-{}", sanitize(s.name())) } else { base.clone() };
                store.put_series(&n, s, &meta).map_err(ApiError::from)
            })
            .collect()
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok((StatusCode::CREATED, Json(stored)))
}

#[derive(Debug, Default, Deserialize)]
struct WaitQuery {
    #[serde(default)]
    wait: bool,
}

fn run_id(req: &PipelineRequest) -> String {
    Fingerprint::of_params("run", req).short()
}

#[derive(Debug, Serialize)]
struct RunSummary {
    id: String,
    status: &'static str,
    dataset: String,
    dataset_version: u32,
    points: usize,
    series_len: usize,
    embedding_dim: usize,
    window: usize,
    stride: usize,
    fingerprints: BTreeMap<Stage, Fingerprint>,
    n_clusters: Option<usize>,
    silhouette: Option<f64>,
    stages: Vec<StageRecord>,
}

fn summary(id: &str, run: &PipelineRun) -> RunSummary {
    RunSummary {
        id: id.to_string(),
        status: "done",
        dataset: run.dataset.name.clone(),
        dataset_version: run.dataset.version,
        points: run.points(),
        series_len: run.series.len(),
        embedding_dim: run.embedding_dim,
        window: run.geometry.window,
        stride: run.geometry.stride,
        fingerprints: run.stages.iter().map(|r| (r.stage, r.fingerprint)).collect(),
        n_clusters: run.clusters.as_ref().map(|c| c.n_clusters),
        silhouette: run.clusters.as_ref().and_then(|c| c.score),
        stages: run.stages.clone(),
    }
}

fn status_response(id: &str, status: &RunStatus) -> Response {
    match status {
        RunStatus::Running => (StatusCode::OK, Json(json!({ "id": id, "status": "running" }))).into_response(),
        RunStatus::Done(run) => (StatusCode::OK, Json(summary(id, run))).into_response(),
        RunStatus::Failed { stage, message } => (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(json!({ "id": id, "status": "failed", "stage": stage, "error": message })),
        )
            .into_response(),
    }
}

async fn start_pipeline(
    State(state): State<Arc<AppState>>,
    Query(q): Query<WaitQuery>,
    body: Result<Json<PipelineRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Response> {
    let Json(req) = body.map_err(|e| ApiError::unprocessable(e.body_text()))?;
    // Cheap checks up front so bad requests fail with 404/422, not a job.
    let meta = state.pipeline.dataset_meta(&req.dataset)?;
    req.validate(&meta)?;
    let id = run_id(&req);

    match state.status(&id) {
        Some(RunStatus::Done(run)) => return Ok(status_response(&id, &RunStatus::Done(run))),
        Some(RunStatus::Running) if !q.wait => {
            return Ok((StatusCode::ACCEPTED, Json(json!({ "id": id, "status": "running" }))).into_response())
        }
        _ => {}
    }
    state.set_status(&id, RunStatus::Running);

    let task_state = state.clone();
    let task_id = id.clone();
    let handle = tokio::task::spawn_blocking(move || task_state.execute(&task_id, &req));
    if q.wait {
        let status = handle
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        Ok(status_response(&id, &status))
    } else {
        Ok((StatusCode::ACCEPTED, Json(json!({ "id": id, "status": "running" }))).into_response())
    }
}

async fn get_pipeline(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let status = state.status(&id).ok_or_else(|| ApiError::not_found(format!("unknown run `{id}`")))?;
    Ok(status_response(&id, &status))
}

fn finished_run(state: &AppState, id: &str) -> ApiResult<Arc<PipelineRun>> {
    match state.status(id) {
        None => Err(ApiError::not_found(format!("unknown run `{id}`"))),
        Some(RunStatus::Done(run)) => Ok(run),
        Some(RunStatus::Running) => Err(ApiError::new(StatusCode::CONFLICT, format!("run `{id}` is still running"))),
        Some(RunStatus::Failed { stage, message }) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message,
            stage,
        }),
    }
}

#[derive(Debug, Deserialize)]
struct DisplayQuery {
    cap: Option<usize>,
    start_ns: Option<i64>,
    end_ns: Option<i64>,
}

async fn get_display(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<DisplayQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let run = finished_run(&state, &id)?;
    let cap = q.cap.unwrap_or(state.display_cap);
    if cap > state.display_cap {
        return Err(ApiError::unprocessable(format!(
            "cap {cap} exceeds the display limit {}",
            state.display_cap
        )));
    }
    let viewport = match (q.start_ns, q.end_ns) {
        (None, None) => None,
        (Some(start_ns), Some(end_ns)) => Some(Viewport { start_ns, end_ns }),
        _ => return Err(ApiError::unprocessable("start_ns and end_ns go together")),
    };
    let params = DisplayParams { cap, viewport };
    let pipeline = state.pipeline.clone();
    let payload = tokio::task::spawn_blocking(move || pipeline.display(&run, params))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;

    let wants_columnar = headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains(COLUMNAR_MIME));
    if wants_columnar {
        let mut cols = vec![
            Column::f64("x", payload.x.clone()),
            Column::f64("y", payload.y.clone()),
            Column::i64("point_index", payload.point_indices.iter().map(|&i| i as i64).collect()),
        ];
        if let Some(l) = &payload.labels {
            cols.push(Column::i64("label", l.clone()));
        }
        let bytes = write_columnar(&Table::new(cols))
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        return Ok(([(header::CONTENT_TYPE, COLUMNAR_MIME)], bytes).into_response());
    }
    Ok(Json(&*payload).into_response())
}

async fn post_selection(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<SelectionRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Response> {
    let run = finished_run(&state, &id)?;
    let Json(sel) = body.map_err(|e| ApiError::unprocessable(e.body_text()))?;
    let out = state.pipeline.resolve_selection(&run, &sel)?;
    Ok(Json(out).into_response())
}

#[derive(Debug, Serialize)]
struct StageLogRow {
    stage: Stage,
    compute_count: u64,
    hit_count: u64,
    seconds: f64,
}

#[derive(Debug, Serialize)]
struct Logs {
    stages: Vec<StageLogRow>,
    cache: CacheStats,
    timings: Vec<LogRow>,
}

async fn get_logs(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let cache = state.pipeline.cache().stats();
    let stages = cache
        .stages
        .iter()
        .map(|s| StageLogRow {
            stage: s.stage,
            compute_count: s.compute_count,
            hit_count: s.hit_count,
            seconds: s.last_compute_seconds,
        })
        .collect();
    let timings = state.log.lock().unwrap_or_else(|e| e.into_inner()).iter().cloned().collect();
    Json(serde_json::to_value(Logs { stages, cache, timings }).expect("serializable"))
}

async fn get_artifact_meta(
    State(state): State<Arc<AppState>>,
    Path((kind, name, version)): Path<(String, String, String)>,
) -> ApiResult<Json<Artifact>> {
    let kind: ArtifactKind = kind.parse().map_err(ApiError::not_found)?;
    let version = match version.as_str() {
        "latest" => None,
        v => Some(
            v.trim_start_matches('v')
                .parse::<u32>()
                .map_err(|_| ApiError::unprocessable(format!("bad version `{v}`")))?,
        ),
    };
    Ok(Json(state.pipeline.store().artifact_meta(kind, &name, version)?))
}
