//! HTTP routes. Every error body is `{"error": "..."}`, plus `"report"` when
//! a partial or LLM-less report is available.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use terratrace_core::analysis::{self, AnalysisError, AnalysisReport, AnalysisRequest};
use terratrace_core::curve::{self, PolyFit, DEFAULT_DEGREE, MAX_DEGREE};
use terratrace_core::{CellId, GeoPoint, SignatureCurve};

use crate::config::AppState;

/// Cells farther than this from a clicked point are not reported.
pub const NEAREST_MAX_M: f64 = 5000.0;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/analyze", post(analyze))
        .route("/api/curve", get(cell_curve))
        .route("/api/manifest", get(manifest))
        .route("/api/chat", post(chat))
        .route("/api/nearest", get(nearest))
        .route("/api/health", get(|| async { Json(serde_json::json!({ "status": "ok" })) }))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    report: Option<Box<AnalysisReport>>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into(), report: None }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<AnalysisError> for ApiError {
    fn from(e: AnalysisError) -> Self {
        let message = e.to_string();
        match e {
            AnalysisError::InvalidRequest(_) => Self::bad_request(message),
            AnalysisError::NoCells => Self::new(StatusCode::NOT_FOUND, message),
            AnalysisError::InsufficientData(report) => Self { status: StatusCode::UNPROCESSABLE_ENTITY, message, report: Some(report) },
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a AnalysisReport>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: &self.message, report: self.report.as_deref() })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn run_blocking(state: &Arc<AppState>, req: AnalysisRequest) -> Result<AnalysisReport, ApiError> {
    let state = Arc::clone(state);
    tokio::task::spawn_blocking(move || analysis::run_analysis(&state.store, &state.fires, &req, &state.options))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

async fn analyze(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<AnalysisReport> {
    let req: AnalysisRequest = parse_body(&body)?;
    let mut report = run_blocking(&state, req.clone()).await?;
    if req.include_llm {
        if let Err(e) = analysis::attach_llm(&mut report, &state.llm).await {
            return Err(ApiError { status: StatusCode::BAD_GATEWAY, message: e.to_string(), report: Some(Box::new(report)) });
        }
    }
    Ok(Json(report))
}

#[derive(Debug, Deserialize)]
struct CurveQuery {
    cell: String,
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
    degree: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct CellCurve {
    pub cell: CellId,
    pub center: GeoPoint,
    pub samples: Vec<(NaiveDate, f32)>,
    /// Fit over the daily-interpolated samples; absent when there are too
    /// few samples for the degree.
    pub fit: Option<PolyFit>,
}

async fn cell_curve(State(state): State<Arc<AppState>>, query: Result<Query<CurveQuery>, axum::extract::rejection::QueryRejection>) -> ApiResult<CellCurve> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let cell: CellId = q.cell.parse().map_err(|e| ApiError::bad_request(format!("cell: {e}")))?;
    let center = state.store.center(cell).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown cell {cell}")))?;
    let degree = q.degree.unwrap_or(DEFAULT_DEGREE);
    if degree > MAX_DEGREE {
        return Err(ApiError::bad_request(format!("degree {degree} outside 0..={MAX_DEGREE}")));
    }
    let (from, to) = match (q.from, q.to, state.store.manifest().date_range) {
        (Some(f), Some(t), _) => (f, t),
        (f, t, Some((lo, hi))) => (f.unwrap_or(lo), t.unwrap_or(hi)),
        (f, t, None) => (f.unwrap_or(NaiveDate::MIN), t.unwrap_or(NaiveDate::MAX)),
    };
    if from > to {
        return Err(ApiError::bad_request(format!("date range {from} > {to}")));
    }
    let series = state.store.load_series(cell, from, to);
    let raw = SignatureCurve::new(series.samples.iter().map(|&(d, v)| (d as i32, v as f64)).collect(), 1);
    let fit = curve::interpolate_daily(&raw).ok().and_then(|daily| curve::polyfit(&daily, degree).ok());
    Ok(Json(CellCurve { cell, center, samples: series.dates().zip(series.samples.iter().map(|s| s.1)).collect(), fit }))
}

async fn manifest(State(state): State<Arc<AppState>>) -> Json<terratrace_core::DatasetManifest> {
    Json(state.store.manifest().clone())
}

#[derive(Debug, Deserialize)]
struct ChatRequest {
    message: String,
    report_id: Option<String>,
    report: Option<Box<AnalysisReport>>,
}

#[derive(Debug, Serialize)]
struct ChatReply {
    reply: String,
}

async fn chat(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<ChatReply> {
    let req: ChatRequest = parse_body(&body)?;
    if req.message.trim().is_empty() {
        return Err(ApiError::bad_request("message is empty"));
    }
    let report = match (req.report, req.report_id) {
        (Some(r), _) => *r,
        (None, Some(id)) => {
            let analysis_req = analysis::decode_report_id(&id).ok_or_else(|| ApiError::bad_request("report_id is not a valid report id"))?;
            match run_blocking(&state, analysis_req).await {
                Ok(r) => r,
                Err(ApiError { report: Some(r), .. }) => *r,
                Err(e) => return Err(e),
            }
        }
        (None, None) => return Err(ApiError::bad_request("chat needs report context: report_id or report")),
    };
    let payload = analysis::report_payload(&report)
        .ok_or_else(|| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "report has no curve features to discuss"))?
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let reply = state.llm.chat(&req.message, &payload).await.map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, e.to_string()))?;
    Ok(Json(ChatReply { reply }))
}

#[derive(Debug, Deserialize)]
struct NearestQuery {
    lat: f64,
    lon: f64,
}

#[derive(Debug, Serialize)]
struct NearestCell {
    cell: CellId,
    center: GeoPoint,
    distance_m: f64,
}

async fn nearest(State(state): State<Arc<AppState>>, query: Result<Query<NearestQuery>, axum::extract::rejection::QueryRejection>) -> ApiResult<NearestCell> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let p = GeoPoint::new(q.lat, q.lon).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let no_data = || ApiError::new(StatusCode::NOT_FOUND, "no data near point");
    let (cell, distance_m) = state.store.nearest_cell(p).map_err(|_| no_data())?;
    if distance_m > NEAREST_MAX_M {
        return Err(no_data());
    }
    Ok(Json(NearestCell { cell, center: state.store.center(cell).expect("stored cell has a center"), distance_m }))
}
