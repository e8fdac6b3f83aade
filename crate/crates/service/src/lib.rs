// SPDX-License-Identifier: Apache-2.0

//! Consumer-side building monitoring service. Readings arrive only through
//! dataspace transfers into the service's own store; the HTTP layer answers
//! room, sensor and forecast queries from that store and the loaded models.
//!
//! Field names of every response document are listed in `api`. Timestamps
//! are epoch seconds.

pub mod api;
pub mod http;
pub mod models;
pub mod provider;
pub mod service;

use axum::http::StatusCode;
use edgespace_core::dataspace::DataspaceError;
use edgespace_core::store::StoreError;
use thiserror::Error;

pub use http::{router, AppState};
pub use models::{ModelSet, ModelSetError};
pub use service::{BuildingService, ServiceConfig, Subscription};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{what} `{id}` not found")]
    NotFound { what: &'static str, id: String },
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unavailable(String),
    #[error("negotiation for `{asset_id}` ended {state}: {reason}")]
    Denied { asset_id: String, state: String, reason: String },
    #[error(transparent)]
    Dataspace(#[from] DataspaceError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound { .. } => StatusCode::NOT_FOUND,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Denied { .. } => StatusCode::FORBIDDEN,
            ServiceError::Dataspace(e) => match e {
                DataspaceError::UnknownAsset(_) | DataspaceError::UnknownProcess(_) => StatusCode::NOT_FOUND,
                DataspaceError::BadMessage(_) | DataspaceError::InvalidAsset(_) => StatusCode::BAD_REQUEST,
                DataspaceError::PolicyDenied(_) => StatusCode::FORBIDDEN,
                DataspaceError::Throttled => StatusCode::TOO_MANY_REQUESTS,
                DataspaceError::Journal(_) => StatusCode::INTERNAL_SERVER_ERROR,
                _ => StatusCode::CONFLICT,
            },
            ServiceError::Store(StoreError::TooOld { .. }) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}
