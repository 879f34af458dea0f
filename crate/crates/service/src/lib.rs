//! JSON-over-HTTP API over a shared graph.
//!
//! Handlers only translate between HTTP and the core operations. Writes take
//! the state's write lock for their whole duration, so they are serialized and
//! visible to every request that starts after the response is sent.

use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::RwLock;

use xaikg_core::decision::{options_all, RulesConfig};
use xaikg_core::explanation::{explain_all, DEFAULT_TOP_K};
use xaikg_core::feedback::{record_action_as, record_feedback_as, synthesize_feedback, SynthConfig};
use xaikg_core::graph::parse_date;
use xaikg_core::ingestion::{
    ingest_forecasts, ingest_relevance, ingest_shipments, parse_forecasts_json, parse_relevance_jsonl,
    parse_shipments_csv, IngestCounts,
};
use xaikg_core::metrics::{exact_metrics, sampled_metrics};
use xaikg_core::query::{forecast_detail, list_forecasts, ForecastFilter};
use xaikg_core::schema::dump_schema;
use xaikg_core::{Error, ErrorCategory, Graph, NodeId, SchemaSpec};

pub struct AppState {
    pub graph: Graph,
    pub schema: SchemaSpec,
}

#[derive(Clone)]
pub struct SharedState(Arc<RwLock<AppState>>);

impl SharedState {
    pub fn new(graph: Graph, schema: SchemaSpec) -> Self {
        Self(Arc::new(RwLock::new(AppState { graph, schema })))
    }

    pub async fn read(&self) -> tokio::sync::RwLockReadGuard<'_, AppState> {
        self.0.read().await
    }

    pub async fn write(&self) -> tokio::sync::RwLockWriteGuard<'_, AppState> {
        self.0.write().await
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiCode {
    ParseError,
    SchemaViolation,
    UnknownId,
    Conflict,
    InvalidArgument,
}

impl ApiCode {
    pub fn status(self) -> StatusCode {
        match self {
            ApiCode::ParseError => StatusCode::BAD_REQUEST,
            ApiCode::UnknownId => StatusCode::NOT_FOUND,
            ApiCode::Conflict => StatusCode::CONFLICT,
            ApiCode::SchemaViolation | ApiCode::InvalidArgument => StatusCode::UNPROCESSABLE_ENTITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: ApiCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ApiCode, message: impl Into<String>) -> Self {
        Self {
            status: code.status().as_u16(),
            code,
            message: message.into(),
        }
    }

    fn parse(message: impl ToString) -> Self {
        Self::new(ApiCode::ParseError, message.to_string())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = match e.category() {
            ErrorCategory::Parse => ApiCode::ParseError,
            ErrorCategory::SchemaViolation => ApiCode::SchemaViolation,
            ErrorCategory::UnknownId => ApiCode::UnknownId,
            ErrorCategory::Conflict => ApiCode::Conflict,
            ErrorCategory::InvalidArgument => ApiCode::InvalidArgument,
            // The service never touches the filesystem while handling a request.
            ErrorCategory::Io => {
                return Self {
                    status: StatusCode::INTERNAL_SERVER_ERROR.as_u16(),
                    code: ApiCode::InvalidArgument,
                    message: e.to_string(),
                }
            }
        };
        Self::new(code, e.to_string())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::parse(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn created<T: Serialize>(body: T) -> Response {
    (StatusCode::CREATED, Json(body)).into_response()
}

/// Parses a JSON body, treating an empty body as `T::default()`.
fn json_or_default<T: DeserializeOwned + Default>(body: &[u8]) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    json(body)
}

fn json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::parse(format!("request body: {e}")))
}

fn node_id(text: &str) -> ApiResult<NodeId> {
    text.parse::<NodeId>().map_err(|e| Error::from(e).into())
}

fn date(field: &str, text: &str) -> ApiResult<NaiveDate> {
    parse_date(text).ok_or_else(|| ApiError::parse(format!("{field}: expected YYYY-MM-DD, got {text:?}")))
}

fn today() -> NaiveDate {
    chrono::Utc::now().date_naive()
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/ingest/shipments", post(ingest_shipments_handler))
        .route("/ingest/forecasts", post(ingest_forecasts_handler))
        .route("/ingest/relevance", post(ingest_relevance_handler))
        .route("/pipeline/explanations", post(explanations_handler))
        .route("/pipeline/options", post(options_handler))
        .route("/pipeline/synth-feedback", post(synth_feedback_handler))
        .route("/feedback", post(feedback_handler))
        .route("/actions", post(actions_handler))
        .route("/forecasts", get(forecasts_handler))
        .route("/forecasts/{node_id}", get(forecast_detail_handler))
        .route("/metrics", get(metrics_handler))
        .route("/graph/export", get(export_handler))
        .route("/schema", get(schema_handler))
        .with_state(state)
}

/// Serves the API until `shutdown` resolves.
pub async fn serve(listener: TcpListener, state: SharedState, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

async fn ingest_shipments_handler(State(state): State<SharedState>, body: Bytes) -> ApiResult<Response> {
    let records = parse_shipments_csv(&body[..])?;
    let mut s = state.write().await;
    let AppState { graph, schema } = &mut *s;
    Ok(created(ingest_shipments(graph, schema, &records)?))
}

async fn ingest_forecasts_handler(State(state): State<SharedState>, body: Bytes) -> ApiResult<Response> {
    let records = parse_forecasts_json(&body[..])?;
    let mut s = state.write().await;
    let AppState { graph, schema } = &mut *s;
    Ok(created(ingest_forecasts(graph, schema, &records)?))
}

async fn ingest_relevance_handler(State(state): State<SharedState>, body: Bytes) -> ApiResult<Response> {
    let records = parse_relevance_jsonl(&body[..])?;
    let mut s = state.write().await;
    let AppState { graph, schema } = &mut *s;
    let counts: IngestCounts = ingest_relevance(graph, schema, &records)?;
    Ok(created(counts))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Created {
    pub created: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplanationsRequest {
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    DEFAULT_TOP_K
}

impl Default for ExplanationsRequest {
    fn default() -> Self {
        Self { k: DEFAULT_TOP_K }
    }
}

async fn explanations_handler(State(state): State<SharedState>, body: Bytes) -> ApiResult<Response> {
    let req: ExplanationsRequest = json_or_default(&body)?;
    let mut s = state.write().await;
    let AppState { graph, schema } = &mut *s;
    Ok(created(Created {
        created: explain_all(graph, schema, req.k)?,
    }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsRequest {
    pub config: Option<RulesConfig>,
}

async fn options_handler(State(state): State<SharedState>, body: Bytes) -> ApiResult<Response> {
    let req: OptionsRequest = json_or_default(&body)?;
    let rules = req.config.unwrap_or_default();
    rules.validate()?;
    let mut s = state.write().await;
    let AppState { graph, schema } = &mut *s;
    Ok(created(Created {
        created: options_all(graph, schema, &rules)?,
    }))
}

async fn synth_feedback_handler(State(state): State<SharedState>, body: Bytes) -> ApiResult<Response> {
    let config: SynthConfig = json(&body)?;
    let mut s = state.write().await;
    let AppState { graph, schema } = &mut *s;
    Ok(created(Created {
        created: synthesize_feedback(graph, schema, &config)?,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub user: String,
    pub target_id: String,
    pub rating: i64,
    #[serde(default)]
    pub comment: String,
    /// Defaults to the current UTC date.
    pub created_at: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackCreated {
    pub feedback_id: NodeId,
}

async fn feedback_handler(State(state): State<SharedState>, body: Bytes) -> ApiResult<Response> {
    let req: FeedbackRequest = json(&body)?;
    let target = node_id(&req.target_id)?;
    let created_at = match &req.created_at {
        Some(d) => date("created_at", d)?,
        None => today(),
    };
    let mut s = state.write().await;
    let AppState { graph, schema } = &mut *s;
    let feedback_id = record_feedback_as(graph, schema, &req.user, target, req.rating, &req.comment, created_at)?;
    Ok(created(FeedbackCreated { feedback_id }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRequest {
    pub user: String,
    pub option_id: String,
    pub kind: String,
    pub created_at: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCreated {
    pub action_id: NodeId,
}

async fn actions_handler(State(state): State<SharedState>, body: Bytes) -> ApiResult<Response> {
    let req: ActionRequest = json(&body)?;
    let option = node_id(&req.option_id)?;
    let created_at = match &req.created_at {
        Some(d) => date("created_at", d)?,
        None => today(),
    };
    let mut s = state.write().await;
    let AppState { graph, schema } = &mut *s;
    let action_id = record_action_as(graph, schema, &req.user, option, &req.kind, created_at)?;
    Ok(created(ActionCreated { action_id }))
}

#[derive(Debug, Default, Deserialize)]
pub struct ForecastQuery {
    pub material: Option<String>,
    pub client: Option<String>,
    pub from: Option<String>,
    pub to: Option<String>,
    pub offset: Option<usize>,
    pub limit: Option<usize>,
}

impl ForecastQuery {
    fn into_filter(self) -> ApiResult<ForecastFilter> {
        Ok(ForecastFilter {
            material: self.material,
            client: self.client,
            from: self.from.as_deref().map(|d| date("from", d)).transpose()?,
            to: self.to.as_deref().map(|d| date("to", d)).transpose()?,
            offset: self.offset.unwrap_or(0),
            limit: self.limit,
        })
    }
}

async fn forecasts_handler(
    State(state): State<SharedState>,
    query: Result<Query<ForecastQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let filter = query?.0.into_filter()?;
    let s = state.read().await;
    Ok(Json(list_forecasts(&s.graph, &filter)).into_response())
}

async fn forecast_detail_handler(State(state): State<SharedState>, Path(id): Path<String>) -> ApiResult<Response> {
    let id = node_id(&id)?;
    let s = state.read().await;
    Ok(Json(forecast_detail(&s.graph, id)?).into_response())
}

#[derive(Debug, Default, Deserialize)]
pub struct MetricsQuery {
    pub sample: Option<f64>,
    pub seed: Option<u64>,
}

async fn metrics_handler(
    State(state): State<SharedState>,
    query: Result<Query<MetricsQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let q = query?.0;
    let s = state.read().await;
    let metrics = match q.sample {
        Some(fraction) => sampled_metrics(&s.graph, fraction, q.seed.unwrap_or(0))?,
        None => exact_metrics(&s.graph),
    };
    Ok(Json(metrics).into_response())
}

async fn export_handler(State(state): State<SharedState>) -> Response {
    let s = state.read().await;
    ([(header::CONTENT_TYPE, "application/x-ndjson")], s.graph.to_jsonl()).into_response()
}

async fn schema_handler(State(state): State<SharedState>) -> Response {
    let s = state.read().await;
    ([(header::CONTENT_TYPE, "application/json")], dump_schema(&s.schema)).into_response()
}
