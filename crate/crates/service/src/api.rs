//! HTTP routes over [`Engine`]. Handlers only decode the request, call the
//! engine and serialize the result, so responses match the library calls.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::config::RunConfig;
use crate::engine::{Engine, ForecastRequest, WhatIfRequest};
use crate::error::ServiceError;

pub const DEFAULT_TOP: usize = 8;

#[derive(Clone)]
pub struct AppState {
    engine: Option<Arc<Engine>>,
    /// Why no model is loaded, reported on 409.
    missing: Option<String>,
}

impl AppState {
    pub fn new(engine: Engine) -> Self {
        Self {
            engine: Some(Arc::new(engine)),
            missing: None,
        }
    }

    pub fn without_model(reason: impl Into<String>) -> Self {
        Self {
            engine: None,
            missing: Some(reason.into()),
        }
    }

    /// Loads the engine for `cfg`; a missing model or pad table leaves the
    /// server up with inference routes answering 409.
    pub fn load(cfg: &RunConfig) -> Result<Self, ServiceError> {
        match Engine::load(cfg) {
            Ok(e) => Ok(Self::new(e)),
            Err(e @ ServiceError::MissingArtifact { .. }) => Ok(Self::without_model(e.to_string())),
            Err(e) => Err(e),
        }
    }

    pub fn engine(&self) -> Option<&Arc<Engine>> {
        self.engine.as_ref()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_id: Option<String>,
}

pub struct ApiFailure {
    status: StatusCode,
    body: ApiError,
}

impl ApiFailure {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ApiError {
                error: error.into(),
                message: message.into(),
                error_id: None,
            },
        }
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_input", message)
    }
}

impl From<ServiceError> for ApiFailure {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::InvalidInput(m) => Self::unprocessable(m),
            ServiceError::MissingArtifact { .. } => Self::new(StatusCode::CONFLICT, "no_model", e.to_string()),
            other => {
                let id = uuid::Uuid::new_v4().to_string();
                eprintln!("error {id}: {other}");
                let mut f = Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string());
                f.body.error_id = Some(id);
                f
            }
        }
    }
}

impl IntoResponse for ApiFailure {
    fn into_response(self) -> Response {
        json_response(self.status, &self.body)
    }
}

type ApiResult = Result<Response, ApiFailure>;

fn json_response<T: Serialize>(status: StatusCode, value: &T) -> Response {
    match serde_json::to_vec(value) {
        Ok(bytes) => (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

fn ok<T: Serialize>(value: &T) -> ApiResult {
    Ok(json_response(StatusCode::OK, value))
}

fn engine(state: &AppState) -> Result<Arc<Engine>, ApiFailure> {
    state.engine.clone().ok_or_else(|| {
        ApiFailure::new(
            StatusCode::CONFLICT,
            "no_model",
            state.missing.clone().unwrap_or_else(|| "no trained model".into()),
        )
    })
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiFailure> {
    serde_json::from_slice(body).map_err(|e| ApiFailure::unprocessable(e.to_string()))
}

fn parse_query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiFailure> {
    q.map(|Query(v)| v).map_err(|e| ApiFailure::unprocessable(e.body_text()))
}

/// Runs CPU-bound engine work off the async workers.
async fn blocking<T, F>(engine: Arc<Engine>, f: F) -> Result<T, ApiFailure>
where
    F: FnOnce(&Engine) -> crate::error::Result<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ApiFailure::from(ServiceError::Pipeline(format!("worker failed: {e}"))))?
        .map_err(ApiFailure::from)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_loaded: bool,
    pub model_hash: Option<String>,
}

async fn health(State(state): State<AppState>) -> ApiResult {
    ok(&Health {
        status: "ok".into(),
        model_loaded: state.engine.is_some(),
        model_hash: state.engine.as_ref().map(|e| e.model_hash().to_string()),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopQuery {
    pub top: Option<usize>,
}

async fn importance(State(state): State<AppState>, q: Result<Query<TopQuery>, QueryRejection>) -> ApiResult {
    let q = parse_query(q)?;
    let e = engine(&state)?;
    ok(&e.importance(q.top.unwrap_or(DEFAULT_TOP))?)
}

async fn forecast(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let e = engine(&state)?;
    let req: ForecastRequest = parse_body(&body)?;
    ok(&blocking(e, move |e| e.forecast(&req)).await?)
}

async fn whatif(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let e = engine(&state)?;
    let req: WhatIfRequest = parse_body(&body)?;
    ok(&blocking(e, move |e| e.whatif(&req)).await?)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepBody {
    pub step: Option<f64>,
}

async fn optimize(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let e = engine(&state)?;
    let req: StepBody = if body.is_empty() { StepBody::default() } else { parse_body(&body)? };
    let step = req.step.unwrap_or_else(|| e.default_step());
    ok(&blocking(e, move |e| e.optimize(step)).await?)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapQuery {
    pub i: usize,
    pub j: usize,
    pub step: Option<f64>,
}

async fn heatmap(State(state): State<AppState>, q: Result<Query<HeatmapQuery>, QueryRejection>) -> ApiResult {
    let q = parse_query(q)?;
    let e = engine(&state)?;
    let step = q.step.unwrap_or_else(|| e.default_step());
    ok(&blocking(e, move |e| e.heatmap(q.i, q.j, step)).await?)
}

async fn monthly(State(state): State<AppState>) -> ApiResult {
    let e = engine(&state)?;
    ok(&blocking(e, |e| e.monthly()).await?)
}

async fn not_found() -> ApiFailure {
    ApiFailure::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(state: AppState, ui_dir: Option<&std::path::Path>) -> Router {
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/model/importance", get(importance))
        .route("/forecast", post(forecast))
        .route("/whatif", post(whatif))
        .route("/optimize", post(optimize))
        .route("/heatmap", get(heatmap))
        .route("/report/monthly", get(monthly));
    if let Some(dir) = ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true));
    }
    app.fallback(not_found).with_state(state)
}

/// Binds and serves until Ctrl-C.
pub async fn serve(cfg: &RunConfig, port: Option<u16>) -> Result<(), ServiceError> {
    let state = AppState::load(cfg)?;
    if let Some(reason) = &state.missing {
        eprintln!("serving without a model: {reason}");
    }
    let app = router(state, cfg.server.ui_dir.as_deref());
    let addr = format!("{}:{}", cfg.server.host, port.unwrap_or(cfg.server.port));
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| ServiceError::io(&addr, e))?;
    eprintln!("listening on http://{addr}");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::io(&addr, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn internal_errors_carry_an_id() {
        let f = ApiFailure::from(ServiceError::Pipeline("boom".into()));
        assert_eq!(f.status, StatusCode::INTERNAL_SERVER_ERROR);
        let id = f.body.error_id.expect("error id");
        assert!(uuid::Uuid::parse_str(&id).is_ok());
        let f = ApiFailure::from(ServiceError::InvalidInput("x".into()));
        assert_eq!(f.status, StatusCode::UNPROCESSABLE_ENTITY);
        assert!(f.body.error_id.is_none());
    }
}
