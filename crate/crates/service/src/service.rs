// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use edgespace_core::dataspace::{
    negotiate, DspMessage, InMemoryBus, MessageType, NegotiationState, ProviderConnector, PumpReport, TransferState,
};
use edgespace_core::ml::Verdict;
use edgespace_core::store::SeriesStore;
use edgespace_core::{Building, EpochSecs, Modality, PlausibilityRules, SensorReading, TimeWindow};
use serde::{Deserialize, Serialize};

use crate::api::{
    Forecast, LoadedModels, Occupancy, Point, PresenceFeatures, RoomDetail, RoomStatus, RoomSummary, SensorData, SensorInfo,
    Summary,
};
use crate::models::ModelSet;
use crate::ServiceError;

pub const MAX_HORIZON: usize = 60;
/// How far back to look for a plausible reading when building a feature window.
const LOOKBACK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    /// Expected reading cadence; data older than twice this is stale.
    pub cadence_secs: i64,
    pub retention_secs: Option<i64>,
    /// Append-only log for the consumer store; in memory when absent.
    pub store_path: Option<PathBuf>,
    pub plausibility: PlausibilityRules,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { cadence_secs: 60, retention_secs: None, store_path: None, plausibility: PlausibilityRules::default() }
    }
}

/// One standing transfer the service consumes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subscription {
    pub asset_id: String,
    pub negotiation_id: String,
    pub transfer_id: String,
    /// Negotiation states in order, ending in FINALIZED.
    pub negotiation_trace: Vec<String>,
    pub transfer_trace: Vec<String>,
}

pub struct BuildingService {
    building: Building,
    config: ServiceConfig,
    consumer_id: String,
    store: SeriesStore,
    models: RwLock<Arc<ModelSet>>,
    subscriptions: Mutex<Vec<Subscription>>,
    delivered: AtomicU64,
}

impl std::fmt::Debug for BuildingService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BuildingService").field("consumer_id", &self.consumer_id).field("store", &self.store).finish()
    }
}

impl BuildingService {
    pub fn new(building: Building, consumer_id: impl Into<String>, config: ServiceConfig) -> Result<Self, ServiceError> {
        if config.cadence_secs <= 0 {
            return Err(ServiceError::BadRequest(format!("cadence must be > 0, got {}", config.cadence_secs)));
        }
        let store = match &config.store_path {
            Some(p) => SeriesStore::open(p, config.retention_secs)?,
            None => SeriesStore::in_memory(config.retention_secs),
        };
        Ok(Self {
            building,
            config,
            consumer_id: consumer_id.into(),
            store,
            models: RwLock::new(Arc::new(ModelSet::default())),
            subscriptions: Mutex::new(Vec::new()),
            delivered: AtomicU64::new(0),
        })
    }

    pub fn building(&self) -> &Building {
        &self.building
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn consumer_id(&self) -> &str {
        &self.consumer_id
    }

    /// Read-only view of the consumer store.
    pub fn store(&self) -> &SeriesStore {
        &self.store
    }

    /// Data-time clock: the newest stored reading.
    pub fn now(&self) -> Option<EpochSecs> {
        self.store.newest()
    }

    pub fn models(&self) -> Arc<ModelSet> {
        self.models.read().expect("models lock poisoned").clone()
    }

    /// Replaces every model at once. Requests already running keep the set
    /// they started with.
    pub fn swap_models(&self, models: ModelSet) {
        *self.models.write().expect("models lock poisoned") = Arc::new(models);
    }

    pub fn subscriptions(&self) -> Vec<Subscription> {
        self.subscriptions.lock().expect("subscriptions lock poisoned").clone()
    }

    /// Negotiates access to `asset_id` and opens a transfer over `window`.
    /// A negotiation that does not finalize is reported as `Denied`.
    pub fn subscribe(
        &self,
        bus: &mut InMemoryBus,
        provider: &ProviderConnector,
        asset_id: &str,
        window: TimeWindow,
        now: EpochSecs,
    ) -> Result<Subscription, ServiceError> {
        let k = self.subscriptions.lock().expect("subscriptions lock poisoned").len();
        let negotiation_id = format!("neg-{}-{asset_id}-{k}", self.consumer_id);
        let transfer_id = format!("xfer-{}-{asset_id}-{k}", self.consumer_id);
        let (n, negotiation_trace) = negotiate(bus, provider, &self.consumer_id, asset_id, &negotiation_id, now)?;
        if n.state != NegotiationState::Finalized {
            return Err(ServiceError::Denied {
                asset_id: asset_id.to_string(),
                state: n.state.to_string(),
                reason: n.termination_reason.map_or_else(|| "not finalized".into(), |r| r.to_string()),
            });
        }
        let mut transfer_trace = Vec::new();
        let out = bus.send(provider, DspMessage::transfer_request(&transfer_id, &self.consumer_id, &negotiation_id, window), now)?;
        transfer_trace.push(out.to);
        let out = bus.send(provider, DspMessage::transfer(MessageType::TransferStarted, &transfer_id, provider.participant_id()), now)?;
        transfer_trace.push(out.to);
        let sub = Subscription { asset_id: asset_id.to_string(), negotiation_id, transfer_id, negotiation_trace, transfer_trace };
        self.subscriptions.lock().expect("subscriptions lock poisoned").push(sub.clone());
        Ok(sub)
    }

    /// Pulls up to `limit` readings of one transfer into the store. Readings
    /// the store rejects (retention) are skipped and logged.
    pub fn consume(&self, provider: &ProviderConnector, transfer_id: &str, limit: Option<usize>) -> Result<PumpReport, ServiceError> {
        let mut rejected = 0usize;
        let mut fatal = None;
        let report = provider.pump(transfer_id, limit, &mut |r: &SensorReading| {
            if fatal.is_some() {
                return;
            }
            match self.store.append(r.clone()) {
                Ok(()) => {
                    self.delivered.fetch_add(1, Ordering::Relaxed);
                }
                Err(e @ edgespace_core::store::StoreError::TooOld { .. }) => {
                    rejected += 1;
                    log::debug!("{transfer_id}: {e}");
                }
                Err(e) => fatal = Some(e),
            }
        })?;
        if let Some(e) = fatal {
            return Err(e.into());
        }
        if rejected > 0 {
            log::warn!("{transfer_id}: {rejected} readings rejected by retention");
        }
        Ok(report)
    }

    /// Drains every subscription that is still STARTED.
    pub fn consume_all(&self, provider: &ProviderConnector) -> Result<Vec<PumpReport>, ServiceError> {
        let mut out = Vec::new();
        for s in self.subscriptions() {
            if provider.transfer(&s.transfer_id).is_some_and(|t| t.state == TransferState::Started) {
                out.push(self.consume(provider, &s.transfer_id, None)?);
            }
        }
        Ok(out)
    }

    pub fn rooms(&self) -> Vec<RoomSummary> {
        self.building
            .rooms()
            .map(|r| RoomSummary { room_id: r.room_id.clone(), name: r.name.clone(), device_count: r.device_ids.len() })
            .collect()
    }

    pub fn room(&self, room_id: &str) -> Result<RoomDetail, ServiceError> {
        let room = self.building.room(room_id).ok_or_else(|| ServiceError::NotFound { what: "room", id: room_id.to_string() })?;
        let sensors = self
            .building
            .room_devices(room)
            .map(|d| SensorInfo { device_id: d.device_id.clone(), kind: d.kind, modalities: d.modalities.iter().copied().collect() })
            .collect();
        Ok(RoomDetail {
            room_id: room.room_id.clone(),
            name: room.name.clone(),
            status: self.room_status(room_id, &self.models())?,
            sensors,
        })
    }

    fn latest_plausible(&self, device_id: &str, m: Modality, n: usize) -> Vec<SensorReading> {
        let rules = &self.config.plausibility;
        let mut out: Vec<SensorReading> = self
            .store
            .latest(device_id, m, LOOKBACK.max(4 * n))
            .into_iter()
            .filter(|r| rules.check_value(m, r.value()).unwrap_or(true))
            .collect();
        out.drain(..out.len().saturating_sub(n));
        out
    }

    /// The latest per-modality means over the room's devices, and the oldest
    /// timestamp among them. None when some modality has no reading.
    pub fn feature_window(&self, room_id: &str) -> Result<Result<(PresenceFeatures, EpochSecs), String>, ServiceError> {
        let room = self.building.room(room_id).ok_or_else(|| ServiceError::NotFound { what: "room", id: room_id.to_string() })?;
        let mut means = [0.0; 3];
        let mut as_of = EpochSecs::MAX;
        for (slot, m) in Modality::CLIMATE.into_iter().enumerate() {
            let latest: Vec<SensorReading> = self
                .building
                .room_devices(room)
                .filter(|d| d.modalities.contains(&m))
                .filter_map(|d| self.latest_plausible(&d.device_id, m, 1).pop())
                .collect();
            if latest.is_empty() {
                return Ok(Err(format!("no {m} reading")));
            }
            means[slot] = latest.iter().map(SensorReading::value).sum::<f64>() / latest.len() as f64;
            as_of = as_of.min(latest.iter().map(SensorReading::timestamp).min().expect("non-empty"));
        }
        Ok(Ok((PresenceFeatures { temperature: means[0], humidity: means[1], co2: means[2] }, as_of)))
    }

    pub fn room_status(&self, room_id: &str, models: &ModelSet) -> Result<RoomStatus, ServiceError> {
        let unknown = |as_of, features, reason: String| RoomStatus {
            room_id: room_id.to_string(),
            occupancy: Occupancy::Unknown,
            as_of,
            probability: None,
            features,
            reason: Some(reason),
        };
        let (features, as_of) = match self.feature_window(room_id)? {
            Ok(w) => w,
            Err(reason) => return Ok(unknown(None, None, reason)),
        };
        let now = self.now().unwrap_or(as_of);
        let limit = 2 * self.config.cadence_secs;
        if now - as_of > limit {
            return Ok(unknown(Some(as_of), Some(features), format!("stale: latest window at {as_of}, now {now}, limit {limit} s")));
        }
        let Some(model) = &models.presence else {
            return Ok(unknown(Some(as_of), Some(features), "no presence model loaded".into()));
        };
        let p = model
            .predict(&features.row())
            .map_err(|e| ServiceError::Unavailable(format!("presence model: {e}")))?;
        Ok(RoomStatus {
            room_id: room_id.to_string(),
            occupancy: if p.label == 1 { Occupancy::Occupied } else { Occupancy::Empty },
            as_of: Some(as_of),
            probability: Some(p.probability),
            features: Some(features),
            reason: None,
        })
    }

    fn sensor_modality(&self, device_id: &str, modality: Modality) -> Result<(), ServiceError> {
        let device =
            self.building.device(device_id).ok_or_else(|| ServiceError::NotFound { what: "device", id: device_id.to_string() })?;
        if !device.modalities.contains(&modality) {
            return Err(ServiceError::BadRequest(format!("device `{device_id}` does not report {modality}")));
        }
        Ok(())
    }

    pub fn sensor_data(&self, device_id: &str, modality: Modality, from: EpochSecs, to: EpochSecs) -> Result<SensorData, ServiceError> {
        self.sensor_modality(device_id, modality)?;
        let window = TimeWindow::new(from, to).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        let models = self.models();
        let readings = self.store.query(device_id, modality, window);
        let detector = models.anomaly.get(&modality);
        let mut anomalies = Vec::new();
        if let Some(f) = detector {
            for r in &readings {
                let verdict = f.classify(&[r.value()]).map_err(|e| ServiceError::Unavailable(format!("anomaly model: {e}")))?;
                if verdict == Verdict::Anomaly {
                    anomalies.push(r.timestamp());
                }
            }
        }
        Ok(SensorData {
            device_id: device_id.to_string(),
            modality,
            unit: modality.unit().to_string(),
            from,
            to,
            series: readings.iter().map(|r| Point { timestamp: r.timestamp(), value: r.value() }).collect(),
            anomalies,
            anomaly_model: detector.is_some(),
        })
    }

    pub fn forecast(&self, device_id: &str, modality: Modality, horizon: usize) -> Result<Forecast, ServiceError> {
        self.sensor_modality(device_id, modality)?;
        if !(1..=MAX_HORIZON).contains(&horizon) {
            return Err(ServiceError::BadRequest(format!("horizon must be within [1, {MAX_HORIZON}], got {horizon}")));
        }
        let models = self.models();
        let model = models
            .forecast
            .get(&modality)
            .ok_or_else(|| ServiceError::Unavailable(format!("no forecast model loaded for {modality}")))?;
        let need = model.window_len;
        let history = self.latest_plausible(device_id, modality, need);
        if history.len() < need {
            return Err(ServiceError::Conflict(format!(
                "insufficient history: {need} recent readings required, {} available",
                history.len()
            )));
        }
        let values: Vec<f64> = history.iter().map(SensorReading::value).collect();
        let predicted = model.forecast(&values, horizon).map_err(|e| ServiceError::Unavailable(format!("forecast model: {e}")))?;
        let origin = history.last().expect("non-empty").timestamp();
        let cadence = self.config.cadence_secs;
        Ok(Forecast {
            device_id: device_id.to_string(),
            modality,
            unit: modality.unit().to_string(),
            origin,
            cadence_secs: cadence,
            points: predicted
                .into_iter()
                .enumerate()
                .map(|(k, value)| Point { timestamp: origin + (k as i64 + 1) * cadence, value })
                .collect(),
        })
    }

    pub fn summary(&self) -> Summary {
        let models = self.models();
        Summary {
            rooms: self.building.rooms().count(),
            devices: self.building.devices().count(),
            readings: self.store.len(),
            series: self.store.keys().len(),
            newest: self.store.newest(),
            transfers: self.subscriptions.lock().expect("subscriptions lock poisoned").len(),
            delivered: self.delivered.load(Ordering::Relaxed),
            models: LoadedModels {
                presence: models.presence.is_some(),
                anomaly: models.anomaly.keys().copied().collect(),
                forecast: models.forecast.keys().copied().collect(),
            },
        }
    }

    pub fn flush(&self) -> Result<(), ServiceError> {
        Ok(self.store.flush()?)
    }
}
