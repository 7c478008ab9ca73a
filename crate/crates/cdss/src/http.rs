//! JSON-over-HTTP surface of the diagnosis service.
//!
//! | method | path                    | body                          |
//! |--------|-------------------------|-------------------------------|
//! | POST   | `/api/v1/diagnose`      | [`DiagnosisRequest`]          |
//! | POST   | `/api/v1/whatif`        | [`WhatIfRequest`]             |
//! | GET    | `/api/v1/model/summary` | –                             |
//! | POST   | `/api/v1/model/reload`  | –                             |
//! | GET    | `/api/v1/health`        | –                             |
//!
//! Errors are JSON objects with an `error` code: `malformed_json` (400),
//! `validation` (422, with per-field `fields`), `no_model_loaded` (503),
//! `no_model_source` (409) and `model_load_failed` (422 or 500).

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};

use crate::service::{DiagnosisRequest, ModelStore, ServiceError, WhatIfRequest};

pub type SharedStore = Arc<ModelStore>;

pub fn router(store: SharedStore) -> Router {
    Router::new()
        .route("/api/v1/diagnose", post(diagnose))
        .route("/api/v1/whatif", post(whatif))
        .route("/api/v1/model/summary", get(summary))
        .route("/api/v1/model/reload", post(reload))
        .route("/api/v1/health", get(health))
        .with_state(store)
}

struct ApiError(StatusCode, Value);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let message = e.to_string();
        match e {
            ServiceError::Validation(fields) => ApiError(
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({"error": "validation", "message": message, "fields": fields}),
            ),
            ServiceError::NoModelLoaded => ApiError(
                StatusCode::SERVICE_UNAVAILABLE,
                json!({"error": "no_model_loaded", "message": message}),
            ),
            ServiceError::NoModelSource => ApiError(
                StatusCode::CONFLICT,
                json!({"error": "no_model_source", "message": message}),
            ),
            ServiceError::Model(m) => {
                let status = if m.is_validation() {
                    StatusCode::UNPROCESSABLE_ENTITY
                } else {
                    StatusCode::INTERNAL_SERVER_ERROR
                };
                ApiError(status, json!({"error": "model_load_failed", "message": message}))
            }
        }
    }
}

fn parse_body(body: &Bytes) -> Result<Value, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError(
            StatusCode::BAD_REQUEST,
            json!({"error": "malformed_json", "message": e.to_string()}),
        )
    })
}

async fn diagnose(State(store): State<SharedStore>, body: Bytes) -> Result<Response, ApiError> {
    let value = parse_body(&body)?;
    let snapshot = store.snapshot()?;
    let request = DiagnosisRequest::from_json(&value)?;
    let response = snapshot.diagnose(&request)?;
    tracing::debug!(class = %response.class, leaf = %response.leaf, "diagnosis");
    Ok(Json(response).into_response())
}

async fn whatif(State(store): State<SharedStore>, body: Bytes) -> Result<Response, ApiError> {
    let value = parse_body(&body)?;
    let snapshot = store.snapshot()?;
    let request: WhatIfRequest = serde_json::from_value(value)
        .map_err(|e| ServiceError::invalid("body", &e.to_string()))?;
    Ok(Json(snapshot.whatif(&request)?).into_response())
}

async fn summary(State(store): State<SharedStore>) -> Result<Response, ApiError> {
    Ok(Json(store.snapshot()?.summary()).into_response())
}

async fn reload(State(store): State<SharedStore>) -> Result<Response, ApiError> {
    let snapshot = store.reload().inspect_err(|e| tracing::warn!(error = %e, "model reload failed"))?;
    tracing::info!(digest = %snapshot.digest, "model reloaded");
    Ok(Json(snapshot.summary()).into_response())
}

async fn health(State(store): State<SharedStore>) -> Json<Value> {
    let model = store.snapshot().ok().map(|s| s.digest.clone());
    Json(json!({"status": "ok", "model_loaded": model.is_some(), "model_digest": model}))
}

/// Serves until Ctrl-C.
pub async fn serve(store: SharedStore, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
