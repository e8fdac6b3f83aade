// SPDX-License-Identifier: Apache-2.0

//! HTTP routes:
//!
//! | method | path                    | body                          |
//! |--------|-------------------------|-------------------------------|
//! | GET    | `/rooms`                | `[RoomSummary]`               |
//! | GET    | `/rooms/{id}`           | `RoomDetail`                  |
//! | GET    | `/sensors/{id}/data`    | `SensorData` (`modality`, `from`, `to`) |
//! | GET    | `/sensors/{id}/forecast`| `Forecast` (`modality`, `horizon`)     |
//! | GET    | `/healthz`              | `{"status": "ok"}`            |
//! | GET    | `/metrics/summary`      | `Summary`                     |
//! | POST   | `/dsp`                  | `DspMessage` in, `MessageOutcome` out |
//!
//! Anything else falls through to the static dashboard bundle when one is
//! configured.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use edgespace_core::dataspace::{DspMessage, ProviderConnector};
use edgespace_core::{EpochSecs, Modality};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::api::ErrorBody;
use crate::service::BuildingService;
use crate::ServiceError;

pub const DEFAULT_HORIZON: usize = 12;

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<BuildingService>,
    /// Provider connector hosted in the same process, if any. `/dsp` is only
    /// routed when present.
    pub provider: Option<Arc<ProviderConnector>>,
}

struct ApiError {
    err: ServiceError,
    room_id: Option<String>,
    device_id: Option<String>,
}

impl From<ServiceError> for ApiError {
    fn from(err: ServiceError) -> Self {
        Self { err, room_id: None, device_id: None }
    }
}

impl ApiError {
    fn room(err: ServiceError, id: &str) -> Self {
        Self { room_id: Some(id.to_string()), ..err.into() }
    }

    fn device(err: ServiceError, id: &str) -> Self {
        Self { device_id: Some(id.to_string()), ..err.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.err.status();
        let body = ErrorBody { error: self.err.to_string(), status: status.as_u16(), room_id: self.room_id, device_id: self.device_id };
        (status, Json(body)).into_response()
    }
}

fn bad_request(msg: impl ToString) -> ApiError {
    ServiceError::BadRequest(msg.to_string()).into()
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let mut app = Router::new()
        .route("/rooms", get(rooms))
        .route("/rooms/{id}", get(room))
        .route("/sensors/{id}/data", get(sensor_data))
        .route("/sensors/{id}/forecast", get(forecast))
        .route("/healthz", get(healthz))
        .route("/metrics/summary", get(summary));
    if state.provider.is_some() {
        app = app.route("/dsp", post(dsp));
    }
    let app = app.with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

async fn rooms(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.service.rooms())
}

async fn room(State(s): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    s.service.room(&id).map(Json).map_err(|e| ApiError::room(e, &id))
}

#[derive(Debug, Deserialize)]
struct DataQuery {
    modality: String,
    from: Option<EpochSecs>,
    to: Option<EpochSecs>,
}

fn modality(s: &str) -> Result<Modality, ApiError> {
    s.parse().map_err(|e: edgespace_core::DomainError| bad_request(e))
}

async fn sensor_data(
    State(s): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<DataQuery>, QueryRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Query(q) = q.map_err(|e| ApiError::device(ServiceError::BadRequest(e.body_text()), &id))?;
    let m = modality(&q.modality)?;
    let from = q.from.unwrap_or(EpochSecs::MIN);
    let to = q.to.unwrap_or(EpochSecs::MAX);
    s.service.sensor_data(&id, m, from, to).map(Json).map_err(|e| ApiError::device(e, &id))
}

#[derive(Debug, Deserialize)]
struct ForecastQuery {
    modality: String,
    horizon: Option<usize>,
}

async fn forecast(
    State(s): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<ForecastQuery>, QueryRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Query(q) = q.map_err(|e| ApiError::device(ServiceError::BadRequest(e.body_text()), &id))?;
    let m = modality(&q.modality)?;
    s.service.forecast(&id, m, q.horizon.unwrap_or(DEFAULT_HORIZON)).map(Json).map_err(|e| ApiError::device(e, &id))
}

async fn healthz() -> impl IntoResponse {
    Json(json!({ "status": "ok" }))
}

async fn summary(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.service.summary())
}

fn wall_clock() -> EpochSecs {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs() as EpochSecs)
}

async fn dsp(State(s): State<AppState>, msg: Result<Json<DspMessage>, JsonRejection>) -> Result<impl IntoResponse, ApiError> {
    let Json(msg) = msg.map_err(|e| bad_request(e.body_text()))?;
    let provider = s.provider.as_ref().ok_or_else(|| ApiError::from(ServiceError::NotFound { what: "route", id: "/dsp".into() }))?;
    let outcome = provider.handle(&msg, wall_clock()).map_err(ServiceError::from)?;
    Ok((StatusCode::OK, Json(outcome)))
}
