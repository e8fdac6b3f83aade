// SPDX-License-Identifier: Apache-2.0

//! Response documents. These field names are the contract the dashboard
//! client mirrors.

use edgespace_core::{DeviceKind, EpochSecs, Modality};
use serde::{Deserialize, Serialize};

/// `GET /rooms` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSummary {
    pub room_id: String,
    pub name: String,
    pub device_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Occupancy {
    Occupied,
    Empty,
    Unknown,
}

/// Mean (temperature, humidity, CO2) the presence model was fed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresenceFeatures {
    pub temperature: f64,
    pub humidity: f64,
    pub co2: f64,
}

impl PresenceFeatures {
    pub fn row(&self) -> [f64; 3] {
        [self.temperature, self.humidity, self.co2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomStatus {
    pub room_id: String,
    pub occupancy: Occupancy,
    /// Oldest of the latest readings that make up the feature window.
    pub as_of: Option<EpochSecs>,
    /// Probability of Occupied; absent when Unknown.
    pub probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PresenceFeatures>,
    /// Why the status is Unknown.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorInfo {
    pub device_id: String,
    pub kind: DeviceKind,
    pub modalities: Vec<Modality>,
}

/// `GET /rooms/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomDetail {
    pub room_id: String,
    pub name: String,
    pub status: RoomStatus,
    pub sensors: Vec<SensorInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub timestamp: EpochSecs,
    pub value: f64,
}

/// `GET /sensors/{id}/data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorData {
    pub device_id: String,
    pub modality: Modality,
    pub unit: String,
    pub from: EpochSecs,
    pub to: EpochSecs,
    pub series: Vec<Point>,
    pub anomalies: Vec<EpochSecs>,
    /// False when no anomaly model is loaded for this modality.
    pub anomaly_model: bool,
}

/// `GET /sensors/{id}/forecast`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub device_id: String,
    pub modality: Modality,
    pub unit: String,
    /// Last observed timestamp the forecast starts from.
    pub origin: EpochSecs,
    pub cadence_secs: i64,
    pub points: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadedModels {
    pub presence: bool,
    pub anomaly: Vec<Modality>,
    pub forecast: Vec<Modality>,
}

/// `GET /metrics/summary`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rooms: usize,
    pub devices: usize,
    pub readings: usize,
    pub series: usize,
    pub newest: Option<EpochSecs>,
    pub transfers: usize,
    pub delivered: u64,
    pub models: LoadedModels,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub status: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_id: Option<String>,
}
