//! The JSON-over-HTTP interface.

use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use serde::Deserialize;
use serde_json::Value;

use super::error::{Result, ServiceError};
use super::pipeline::{self, ExplainOptions, RecordInput, TrainRequest};
use super::registry::{ModelRegistryEntry, Registry, WindowSpec};
use crate::model::WorkerId;
use crate::store::{RecordKind, Store, StoreError};

#[derive(Debug)]
pub struct AppState {
    /// Writers hold the lock for one append, so ingestion is serialized.
    pub store: RwLock<Store>,
    pub registry: RwLock<Registry>,
    /// Training jobs run one at a time.
    pub training: Mutex<()>,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    pub fn new(store: Store, registry: Registry) -> SharedState {
        Arc::new(Self { store: RwLock::new(store), registry: RwLock::new(registry), training: Mutex::new(()) })
    }

    /// Opens the store at `root` and the registry beside it.
    pub fn open(root: impl AsRef<Path>) -> Result<SharedState> {
        let store = Store::open(root.as_ref())?;
        let registry = Registry::for_store(root.as_ref())?;
        Ok(Self::new(store, registry))
    }
}

fn poisoned<T>(_: T) -> ServiceError {
    ServiceError::Store(StoreError::StoreUnavailable("lock poisoned".into()))
}

pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

pub fn status_of(e: &ServiceError) -> StatusCode {
    match e.code() {
        "DuplicateId" => StatusCode::CONFLICT,
        "NotFound" => StatusCode::NOT_FOUND,
        _ if e.is_validation() => StatusCode::BAD_REQUEST,
        "StoreUnavailable" => StatusCode::SERVICE_UNAVAILABLE,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (status_of(&self.0), Json(self.0.body())).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> Result<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(ServiceError::InvalidRequest(format!("worker task failed: {e}"))))?
        .map_err(ApiError)
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &str) -> Result<T> {
    serde_json::from_str(body).map_err(|e| ServiceError::InvalidRequest(e.to_string()))
}

async fn ingest_kind(state: SharedState, kind: RecordKind, body: String) -> ApiResult<Response> {
    let value: Value =
        serde_json::from_str(&body).map_err(|e| ServiceError::Store(StoreError::MalformedDocument(e.to_string())))?;
    let summary = blocking(move || {
        let mut store = state.store.write().map_err(poisoned)?;
        pipeline::ingest(&mut store, kind, &value)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn ingest_pieces(State(state): State<SharedState>, body: String) -> ApiResult<Response> {
    ingest_kind(state, RecordKind::Pieces, body).await
}

async fn ingest_sessions(State(state): State<SharedState>, body: String) -> ApiResult<Response> {
    ingest_kind(state, RecordKind::Sessions, body).await
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    kind: Option<String>,
    from: Option<f64>,
    to: Option<f64>,
}

async fn export(State(state): State<SharedState>, Query(q): Query<ExportQuery>) -> ApiResult<Response> {
    let kind: RecordKind = match q.kind.as_deref() {
        None => RecordKind::Sessions,
        Some(k) => k.parse().map_err(ServiceError::InvalidRequest)?,
    };
    let window = WindowSpec { from: q.from, to: q.to }.to_window().map_err(ServiceError::from)?;
    let csv = blocking(move || {
        let store = state.store.read().map_err(poisoned)?;
        pipeline::export_csv(&store, kind, &window)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

async fn train(State(state): State<SharedState>, body: String) -> ApiResult<Json<ModelRegistryEntry>> {
    let req: TrainRequest = parse_json(&body)?;
    let entry = blocking(move || {
        let _job = state.training.lock().map_err(poisoned)?;
        let outcome = {
            let store = state.store.read().map_err(poisoned)?;
            pipeline::fit(&store, &req)?
        };
        let mut registry = state.registry.write().map_err(poisoned)?;
        pipeline::register(&mut registry, &req, outcome)
    })
    .await?;
    Ok(Json(entry))
}

async fn list_models(State(state): State<SharedState>) -> ApiResult<Json<Vec<ModelRegistryEntry>>> {
    let registry = state.registry.read().map_err(poisoned)?;
    Ok(Json(registry.entries().into_iter().cloned().collect()))
}

async fn model_metrics(State(state): State<SharedState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let registry = state.registry.read().map_err(poisoned)?;
    let doc = registry.get(&id)?;
    Ok(Json(&doc.entry.eval).into_response())
}

#[derive(Debug, Deserialize)]
struct RecordBody {
    record: Value,
    #[serde(flatten)]
    options: ExplainOptions,
}

async fn predict(State(state): State<SharedState>, UrlPath(id): UrlPath<String>, body: String) -> ApiResult<Response> {
    let body: RecordBody = parse_json(&body)?;
    let input = RecordInput::from_value(body.record)?;
    let store = state.store.read().map_err(poisoned)?;
    let registry = state.registry.read().map_err(poisoned)?;
    let prediction = pipeline::predict(&store, registry.get(&id)?, input)?;
    Ok(Json(prediction).into_response())
}

async fn explain(State(state): State<SharedState>, UrlPath(id): UrlPath<String>, body: String) -> ApiResult<Response> {
    let body: RecordBody = parse_json(&body)?;
    let input = RecordInput::from_value(body.record)?;
    let response = blocking(move || {
        let store = state.store.read().map_err(poisoned)?;
        let registry = state.registry.read().map_err(poisoned)?;
        pipeline::explain(&store, registry.get(&id)?, input, &body.options)
    })
    .await?;
    Ok(Json(response).into_response())
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    model: Option<String>,
    seed: Option<u64>,
}

/// Session report from the named or latest task-level model.
async fn session_report(
    State(state): State<SharedState>,
    UrlPath(session): UrlPath<String>,
    Query(q): Query<ReportQuery>,
) -> ApiResult<Response> {
    let response = blocking(move || {
        let store = state.store.read().map_err(poisoned)?;
        let registry = state.registry.read().map_err(poisoned)?;
        let doc = match &q.model {
            Some(id) => registry.get(id)?,
            None => registry
                .latest(super::registry::Scenario::Session)
                .ok_or_else(|| ServiceError::NotFound("task-level model".into()))?,
        };
        let input = RecordInput::Stored { session_id: session.as_str().into(), piece_id: None };
        pipeline::explain(&store, doc, input, &ExplainOptions { seed: q.seed, ..ExplainOptions::default() })
    })
    .await?;
    Ok(Json(response).into_response())
}

#[derive(Debug, Deserialize)]
struct DateQuery {
    date: Option<String>,
}

fn parse_date(raw: Option<&str>) -> Result<Option<NaiveDate>> {
    raw.map(|d| {
        NaiveDate::parse_from_str(d, "%Y-%m-%d").map_err(|e| ServiceError::InvalidRequest(format!("date {d:?}: {e}")))
    })
    .transpose()
}

async fn kpis(
    State(state): State<SharedState>,
    UrlPath(worker): UrlPath<String>,
    Query(q): Query<DateQuery>,
) -> ApiResult<Response> {
    let store = state.store.read().map_err(poisoned)?;
    let worker = WorkerId::new(worker);
    let date = match parse_date(q.date.as_deref())? {
        Some(d) => d,
        None => {
            pipeline::latest_date(&store, &worker).ok_or_else(|| ServiceError::NotFound(format!("worker {worker}")))?
        }
    };
    Ok(Json(pipeline::kpi_report(&store, &worker, date)).into_response())
}

#[derive(Debug, Deserialize)]
struct DashboardQuery {
    worker: Option<String>,
    date: Option<String>,
}

async fn dashboard(State(state): State<SharedState>, Query(q): Query<DashboardQuery>) -> ApiResult<Response> {
    let worker = q.worker.ok_or_else(|| ServiceError::InvalidRequest("worker is required".into()))?;
    let date = parse_date(q.date.as_deref())?;
    let summary = blocking(move || {
        let store = state.store.read().map_err(poisoned)?;
        let registry = state.registry.read().map_err(poisoned)?;
        pipeline::dashboard_summary(&store, &registry, &WorkerId::new(worker), date)
    })
    .await?;
    Ok(Json(summary).into_response())
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/events/pieces", post(ingest_pieces))
        .route("/events/sessions", post(ingest_sessions))
        .route("/export", get(export))
        .route("/train", post(train))
        .route("/models", get(list_models))
        .route("/models/{id}/metrics", get(model_metrics))
        .route("/models/{id}/predict", post(predict))
        .route("/models/{id}/explain", post(explain))
        .route("/reports/{session}", get(session_report))
        .route("/kpis/{worker}", get(kpis))
        .route("/dashboard/summary", get(dashboard))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(state: SharedState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
