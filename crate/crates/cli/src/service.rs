//! HTTP/1.1 JSON API over a [`Registry`]. All vectors on the wire are in raw
//! feature and target units.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use protoforge::pgdsearch::SearchRequest;
use protoforge::uq::{Calibration, Method, PredictionInterval};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{AppError, AppResult};
use crate::jobs::{JobManager, JobSnapshot};
use crate::model::CalibrationRequest;
use crate::registry::Registry;

pub const DEFAULT_ALPHA: f64 = 0.2;

#[derive(Clone)]
pub struct AppState {
    pub registry: Arc<Registry>,
    pub jobs: Arc<JobManager>,
}

impl AppState {
    pub fn new(registry: Registry, workers: usize) -> Self {
        Self {
            registry: Arc::new(registry),
            jobs: Arc::new(JobManager::new(workers)),
        }
    }
}

/// JSON body whose decoding errors name the offending field.
pub struct JsonBody<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for JsonBody<T> {
    type Rejection = AppError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| AppError::invalid("body", e.to_string()))?;
        let de = &mut serde_json::Deserializer::from_slice(&bytes);
        serde_path_to_error::deserialize(de).map(JsonBody).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "body".to_string() } else { path };
            AppError::invalid(field, e.into_inner().to_string())
        })
    }
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_method() -> Method {
    Method::Confmc
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictBody {
    pub x: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Entry id; overrides `method` and `alpha`.
    #[serde(default)]
    pub calibration: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictResponse {
    pub model_id: String,
    pub calibration_id: String,
    pub point: Vec<f64>,
    pub intervals: Vec<PredictionInterval>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CalibrateResponse {
    pub id: String,
    pub created: bool,
    pub model_id: String,
    pub model_hash: String,
    pub calibration: Calibration,
}

/// A search request plus the interval settings for the final point.
#[derive(Debug, Deserialize)]
pub struct SearchBody {
    #[serde(flatten)]
    pub spec: SearchRequest,
    #[serde(default)]
    pub method: Option<Method>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub calibration: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct ScatterQuery {
    pub x: Option<String>,
    pub y: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct JobQuery {
    #[serde(default)]
    pub since: usize,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/models", get(list_models))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/scatter", get(scatter))
        .route("/models/{id}/predict", post(predict))
        .route("/models/{id}/calibrate", post(calibrate))
        .route("/models/{id}/search", post(search))
        .route("/jobs/{id}", get(get_job).delete(cancel_job))
        .with_state(state)
}

/// Runs CPU-bound registry work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> AppResult<T> + Send + 'static) -> AppResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| AppError::Internal(e.to_string()))?
}

async fn health(State(st): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "models": st.registry.models().count() }))
}

async fn list_models(State(st): State<AppState>) -> Json<serde_json::Value> {
    let models: Vec<_> = st.registry.models().map(|m| m.summary()).collect();
    Json(json!({ "models": models }))
}

async fn get_model(State(st): State<AppState>, Path(id): Path<String>) -> AppResult<Response> {
    Ok(Json(st.registry.model(&id)?.detail()).into_response())
}

async fn scatter(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ScatterQuery>,
) -> AppResult<Response> {
    let model = st.registry.model(&id)?;
    let m = &model.bundle.model;
    let x = q.x.unwrap_or_else(|| m.feature_names[0].clone());
    let y = q.y.unwrap_or_else(|| m.target_names[0].clone());
    let out = blocking(move || model.scatter(&x, &y)).await?;
    Ok(Json(out).into_response())
}

async fn predict(
    State(st): State<AppState>,
    Path(id): Path<String>,
    JsonBody(body): JsonBody<PredictBody>,
) -> AppResult<Response> {
    let model = st.registry.model(&id)?;
    let registry = st.registry.clone();
    let out = blocking(move || {
        let entry = registry.resolve(&model, body.calibration.as_deref(), body.method, body.alpha)?;
        let (point, intervals) = registry.predict(&model, &body.x, &entry)?;
        Ok(PredictResponse {
            model_id: model.id().to_string(),
            calibration_id: entry.id.clone(),
            point,
            intervals,
        })
    })
    .await?;
    Ok(Json(out).into_response())
}

async fn calibrate(
    State(st): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<CalibrationRequest>,
) -> AppResult<Response> {
    let model = st.registry.model(&id)?;
    let registry = st.registry.clone();
    let (entry, created) = blocking(move || {
        let (entry, created) = registry.calibrate(&model, &req)?;
        Ok((entry, created))
    })
    .await?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    let body = CalibrateResponse {
        id: entry.id.clone(),
        created,
        model_id: id,
        model_hash: entry.model_hash.clone(),
        calibration: entry.calibration.clone(),
    };
    Ok((status, Json(body)).into_response())
}

async fn search(
    State(st): State<AppState>,
    Path(id): Path<String>,
    JsonBody(body): JsonBody<SearchBody>,
) -> AppResult<Response> {
    let model = st.registry.model(&id)?;
    let m = &model.bundle.model;
    let spec = body.spec.into_spec(m.input_dim(), m.output_dim())?;
    let explicit = body.method.is_some() || body.alpha.is_some() || body.calibration.is_some();
    let registry = st.registry.clone();
    let target = model.clone();
    let calibration = blocking(move || {
        let resolved = registry.resolve(
            &target,
            body.calibration.as_deref(),
            body.method.unwrap_or(Method::Confmc),
            body.alpha.unwrap_or(DEFAULT_ALPHA),
        );
        // Without explicit settings the intervals are best effort.
        match resolved {
            Ok(e) => Ok(Some(e)),
            Err(_) if !explicit => Ok(None),
            Err(e) => Err(e),
        }
    })
    .await?;
    let job = st.jobs.submit(model, spec, calibration);
    let body = json!({ "job_id": job.id, "status": job.status() });
    Ok((StatusCode::ACCEPTED, Json(body)).into_response())
}

async fn get_job(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<JobQuery>,
) -> AppResult<Json<JobSnapshot>> {
    let job = st.jobs.get(&id).ok_or_else(|| AppError::NotFound(format!("job {id}")))?;
    Ok(Json(job.snapshot(q.since)))
}

async fn cancel_job(State(st): State<AppState>, Path(id): Path<String>) -> AppResult<Json<JobSnapshot>> {
    let job = st.jobs.get(&id).ok_or_else(|| AppError::NotFound(format!("job {id}")))?;
    job.cancel();
    Ok(Json(job.snapshot(usize::MAX)))
}

/// Binds and serves until Ctrl-C.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
