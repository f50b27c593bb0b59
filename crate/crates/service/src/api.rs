//! HTTP routes under `/v1`.

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::service::{Service, ServiceError};

/// Ingest submissions carry whole CSV files.
const BODY_LIMIT: usize = 256 * 1024 * 1024;

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    path: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            path: None,
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Invalid(f) => Self {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                code: "invalid",
                message: f.message,
                path: Some(f.path),
            },
            ServiceError::NotFound(m) => Self::new(StatusCode::NOT_FOUND, "not_found", m),
            ServiceError::Conflict(m) => Self::new(StatusCode::CONFLICT, "conflict", m),
            ServiceError::Internal(m) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", m)
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body =
            json!({"error": {"code": self.code, "message": self.message, "path": self.path}});
        (self.status, Json(body)).into_response()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Submission {
    kind: String,
    #[serde(default)]
    config: Value,
}

pub fn router(service: Service) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/jobs", get(list_jobs).post(submit_job))
        .route("/v1/jobs/{id}", get(get_job).delete(cancel_job))
        .route("/v1/artifacts/{reference}", get(get_artifact))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(service)
}

async fn health(State(service): State<Service>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "workers": service.config().workers,
        "jobs": service.status_counts(),
    }))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

async fn submit_job(State(service): State<Service>, body: Bytes) -> Result<Response, ApiError> {
    let raw: Value = serde_json::from_slice(&body).map_err(|e| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "malformed",
            format!("request body is not JSON: {e}"),
        )
    })?;
    let sub: Submission = serde_path_to_error::deserialize(raw).map_err(|e| {
        let path = e.path().to_string();
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: "invalid",
            message: e.into_inner().to_string(),
            path: Some(if path == "." { String::new() } else { path }),
        }
    })?;
    let record = blocking(move || service.submit(&sub.kind, sub.config)).await?;
    let location = format!("/v1/jobs/{}", record.id);
    Ok((
        StatusCode::ACCEPTED,
        [(header::LOCATION, location)],
        Json(record),
    )
        .into_response())
}

async fn list_jobs(State(service): State<Service>) -> Json<Value> {
    Json(json!({ "jobs": service.list() }))
}

async fn get_job(
    State(service): State<Service>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    Ok(Json(service.get(&id)?).into_response())
}

async fn cancel_job(
    State(service): State<Service>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    Ok(Json(service.cancel(&id)?).into_response())
}

async fn get_artifact(
    State(service): State<Service>,
    Path(reference): Path<String>,
) -> Result<Response, ApiError> {
    let found = blocking(move || {
        service
            .store()
            .get(&reference)
            .map_err(|e| ServiceError::Internal(e.to_string()))?
            .ok_or_else(|| ServiceError::NotFound(format!("no artifact {reference}")))
    })
    .await?;
    let (meta, bytes) = found;
    Ok(([(header::CONTENT_TYPE, meta.media_type)], bytes).into_response())
}
