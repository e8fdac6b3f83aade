// SPDX-License-Identifier: Apache-2.0

use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use edgespace_core::dataspace::{InMemoryBus, ProviderConnector, UsagePolicy};
use edgespace_core::ingest::{generate_synthetic, occupancy_records, AnomalyKind, SyntheticProfile};
use edgespace_core::ml::densenet::Sample;
use edgespace_core::ml::MinMax;
use edgespace_core::pipeline::{anomaly_rows, grid_search_anomaly, train_forecaster, train_presence, AnomalyGrid, ForecastConfig, ForecastGrid, PresenceGrid, PresenceOptions};
use edgespace_core::{demo_building, Building, Modality, PlausibilityRules, SensorReading, TimeWindow};
use edgespace_service::api::{ErrorBody, Forecast, Occupancy, RoomDetail, RoomSummary, SensorData, Summary};
use edgespace_service::{provider, router, AppState, BuildingService, ModelSet, ServiceConfig, ServiceError};
use serde::de::DeserializeOwned;
use tower::ServiceExt;

const MONDAY: i64 = 1_700_438_400;
const CADENCE: i64 = 300;
const CONSUMER: &str = "monitoring-app";
const ENV_RD: &str = "shellyht-rdRoom";

fn profile(rate: f64) -> SyntheticProfile {
    let mut p = SyntheticProfile::default();
    p.anomalies.rate = rate;
    p.anomalies.kind = AnomalyKind::OutOfRange;
    p
}

/// Monday 00:00 to Tuesday 12:00, one 200 °C reading at Monday 10:00.
fn provider_readings() -> (Vec<SensorReading>, i64) {
    let window = TimeWindow::new(MONDAY, MONDAY + 36 * 3600).unwrap();
    let data = generate_synthetic(&profile(0.0), &demo_building(), window, CADENCE, 3).unwrap();
    let outlier = MONDAY + 10 * 3600;
    let readings = data
        .readings
        .into_iter()
        .map(|r| {
            if r.device_id() == ENV_RD && r.modality() == Modality::Temperature && r.timestamp() == outlier {
                r.with_value(200.0).unwrap()
            } else {
                r
            }
        })
        .collect();
    (readings, outlier)
}

fn constant_forecaster() -> edgespace_core::ml::DenseNetModel {
    // Every window and target sits at 21 °C inside a 20..22 scaling.
    let scaling = MinMax { min: 20.0, max: 22.0 };
    let samples: Vec<Sample> = (0..200).map(|_| Sample { input: vec![0.5; 3], target: vec![0.5] }).collect();
    let grid = ForecastGrid { learning_rate: vec![0.01], width: vec![8] };
    train_forecaster(&samples, &[scaling], &grid, ForecastConfig { epochs: 60, batch_size: 16 }, 5).unwrap().0
}

fn models() -> &'static ModelSet {
    static MODELS: OnceLock<ModelSet> = OnceLock::new();
    MODELS.get_or_init(|| {
        let building = demo_building();
        let p = profile(0.05);
        let window = TimeWindow::new(MONDAY - 7 * 86_400, MONDAY).unwrap();
        let data = generate_synthetic(&p, &building, window, CADENCE, 11).unwrap();
        let labels = data.labels();
        let (rows, y) = anomaly_rows(&data.readings, &labels, Modality::Temperature);
        let grid = AnomalyGrid { n_estimators: vec![50], max_samples: vec![0.5], contamination: vec![0.05] };
        let (iforest, _) = grid_search_anomaly(&rows, &y, &grid, 11).unwrap();
        let rules = PlausibilityRules::default();
        let clean: Vec<SensorReading> =
            data.readings.iter().filter(|r| rules.check_value(r.modality(), r.value()).unwrap_or(true)).cloned().collect();
        let records = occupancy_records(&clean, "rdRoom", |t| p.is_occupied(t));
        let grid = PresenceGrid { n_estimators: vec![15], max_depth: vec![Some(8)], min_samples_split: vec![2] };
        let (forest, _) = train_presence(&records, &grid, PresenceOptions::default(), 11).unwrap();
        ModelSet {
            presence: Some(forest),
            anomaly: [(Modality::Temperature, iforest)].into_iter().collect(),
            forecast: [(Modality::Temperature, constant_forecaster())].into_iter().collect(),
        }
    })
}

struct Fixture {
    service: Arc<BuildingService>,
    provider: Arc<ProviderConnector>,
    readings: Vec<SensorReading>,
    outlier: i64,
}

fn fixture_with(building: Building, readings: Vec<SensorReading>, config: ServiceConfig, with_models: bool) -> Fixture {
    let policy = UsagePolicy::allow([CONSUMER], "monitoring");
    let (p, _) = provider::publish("building-provider", &building, readings.clone(), &policy, CADENCE as u64, MONDAY).unwrap();
    let p = Arc::new(p);
    let service = BuildingService::new(building.clone(), CONSUMER, config).unwrap();
    let mut bus = InMemoryBus::default();
    let all = TimeWindow::new(MONDAY - 86_400, MONDAY + 7 * 86_400).unwrap();
    for d in building.devices() {
        service.subscribe(&mut bus, &p, &provider::asset_id(&d.device_id), all, MONDAY).unwrap();
    }
    service.consume_all(&p).unwrap();
    if with_models {
        service.swap_models(models().clone());
    }
    Fixture { service: Arc::new(service), provider: p, readings, outlier: 0 }
}

fn fixture() -> Fixture {
    let (readings, outlier) = provider_readings();
    let config = ServiceConfig { cadence_secs: CADENCE, ..ServiceConfig::default() };
    Fixture { outlier, ..fixture_with(demo_building(), readings, config, true) }
}

fn app(f: &Fixture) -> Router {
    router(AppState { service: f.service.clone(), provider: Some(f.provider.clone()) }, None)
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    call(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn get_json<T: DeserializeOwned>(app: &Router, uri: &str) -> (StatusCode, T) {
    let (s, body) = get(app, uri).await;
    (s, serde_json::from_slice(&body).unwrap_or_else(|e| panic!("{uri}: {e}: {}", String::from_utf8_lossy(&body))))
}

#[tokio::test]
async fn rooms_are_listed_in_id_order() {
    let f = fixture();
    let (s, rooms): (_, Vec<RoomSummary>) = get_json(&app(&f), "/rooms").await;
    assert_eq!(s, StatusCode::OK);
    let ids: Vec<&str> = rooms.iter().map(|r| r.room_id.as_str()).collect();
    assert_eq!(ids, ["kitchenRoom", "meetingRoom", "rdRoom", "wdRoom"]);
    assert!(rooms.iter().all(|r| r.device_count == 2));
}

#[tokio::test]
async fn empty_building_lists_no_rooms() {
    let f = fixture_with(Building::default(), Vec::new(), ServiceConfig::default(), false);
    let (s, body) = get(&app(&f), "/rooms").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, b"[]");
}

/// Latest plausible value per device and modality, recomputed from the
/// provider's raw readings.
fn oracle_features(readings: &[SensorReading], building: &Building, room_id: &str) -> ([f64; 3], i64) {
    let rules = PlausibilityRules::default();
    let room = building.room(room_id).unwrap();
    let mut feats = [0.0; 3];
    let mut as_of = i64::MAX;
    for (slot, m) in Modality::CLIMATE.into_iter().enumerate() {
        let mut vals = Vec::new();
        for d in &room.device_ids {
            let last = readings
                .iter()
                .filter(|r| r.device_id() == d && r.modality() == m && rules.check_value(m, r.value()).unwrap())
                .max_by_key(|r| r.timestamp());
            if let Some(r) = last {
                vals.push(r.value());
                as_of = as_of.min(r.timestamp());
            }
        }
        feats[slot] = vals.iter().sum::<f64>() / vals.len() as f64;
    }
    (feats, as_of)
}

#[tokio::test]
async fn room_status_equals_direct_forest_prediction() {
    let f = fixture();
    let app = app(&f);
    let forest = models().presence.as_ref().unwrap();
    for room in ["kitchenRoom", "meetingRoom", "rdRoom", "wdRoom"] {
        let (s, detail): (_, RoomDetail) = get_json(&app, &format!("/rooms/{room}")).await;
        assert_eq!(s, StatusCode::OK);
        let (feats, as_of) = oracle_features(&f.readings, f.service.building(), room);
        let direct = forest.predict(&feats).unwrap();
        let st = &detail.status;
        assert_ne!(st.occupancy, Occupancy::Unknown, "{room}: {:?}", st.reason);
        assert_eq!(st.occupancy == Occupancy::Occupied, direct.label == 1);
        assert_eq!(st.probability, Some(direct.probability));
        assert_eq!(st.features.unwrap().row(), feats);
        assert_eq!(st.as_of, Some(as_of));
        assert_eq!(detail.sensors.len(), 2);
    }
}

#[tokio::test]
async fn tuesday_noon_is_occupied() {
    let f = fixture();
    let (_, detail): (_, RoomDetail) = get_json(&app(&f), "/rooms/rdRoom").await;
    assert_eq!(detail.status.occupancy, Occupancy::Occupied);
    assert!(detail.status.probability.unwrap() > 0.5);
}

#[tokio::test]
async fn unknown_room_echoes_its_id() {
    let f = fixture();
    let (s, body): (_, ErrorBody) = get_json(&app(&f), "/rooms/attic").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(body.room_id.as_deref(), Some("attic"));
    assert_eq!(body.status, 404);
}

#[tokio::test]
async fn stale_room_is_unknown() {
    let (readings, _) = provider_readings();
    let cutoff = MONDAY + 36 * 3600 - 4 * CADENCE;
    let readings = readings.into_iter().filter(|r| r.room_id() != "wdRoom" || r.timestamp() < cutoff).collect();
    let config = ServiceConfig { cadence_secs: CADENCE, ..ServiceConfig::default() };
    let f = fixture_with(demo_building(), readings, config, true);
    let app = app(&f);
    let (_, wd): (_, RoomDetail) = get_json(&app, "/rooms/wdRoom").await;
    assert_eq!(wd.status.occupancy, Occupancy::Unknown);
    assert!(wd.status.reason.as_deref().unwrap().starts_with("stale"), "{:?}", wd.status.reason);
    assert_eq!(wd.status.probability, None);
    let (_, rd): (_, RoomDetail) = get_json(&app, "/rooms/rdRoom").await;
    assert_ne!(rd.status.occupancy, Occupancy::Unknown);
}

#[tokio::test]
async fn missing_model_gives_unknown_then_hot_swap_resolves_it() {
    let (readings, _) = provider_readings();
    let config = ServiceConfig { cadence_secs: CADENCE, ..ServiceConfig::default() };
    let f = fixture_with(demo_building(), readings, config, false);
    let app = app(&f);
    let (_, before): (_, RoomDetail) = get_json(&app, "/rooms/rdRoom").await;
    assert_eq!(before.status.occupancy, Occupancy::Unknown);
    assert_eq!(before.status.reason.as_deref(), Some("no presence model loaded"));
    let held = f.service.models();
    f.service.swap_models(models().clone());
    assert!(held.presence.is_none(), "a snapshot taken before the swap is unchanged");
    let (_, after): (_, RoomDetail) = get_json(&app, "/rooms/rdRoom").await;
    assert_ne!(after.status.occupancy, Occupancy::Unknown);
}

#[tokio::test]
async fn sensor_window_returns_exact_points() {
    let f = fixture();
    let from = MONDAY + 3600;
    let uri = format!("/sensors/{ENV_RD}/data?modality=humidity&from={from}&to={}", from + 2 * CADENCE);
    let (s, data): (_, SensorData) = get_json(&app(&f), &uri).await;
    assert_eq!(s, StatusCode::OK);
    let ts: Vec<i64> = data.series.iter().map(|p| p.timestamp).collect();
    assert_eq!(ts, [from, from + CADENCE, from + 2 * CADENCE]);
    assert_eq!(data.unit, Modality::Humidity.unit());
    assert!(!data.anomaly_model);
}

#[tokio::test]
async fn stored_two_hundred_degrees_is_flagged() {
    let f = fixture();
    let uri = format!("/sensors/{ENV_RD}/data?modality=temperature");
    let (_, data): (_, SensorData) = get_json(&app(&f), &uri).await;
    assert!(data.anomaly_model);
    assert!(data.anomalies.contains(&f.outlier), "{:?}", data.anomalies);
    // Ordinary synthetic temperatures are not flagged.
    assert!(data.anomalies.len() <= data.series.len() / 20, "{} of {}", data.anomalies.len(), data.series.len());
    let iforest = &models().anomaly[&Modality::Temperature];
    for p in &data.series {
        let direct = iforest.classify(&[p.value]).unwrap() == edgespace_core::ml::Verdict::Anomaly;
        assert_eq!(direct, data.anomalies.contains(&p.timestamp));
    }
}

#[tokio::test]
async fn empty_window_is_empty() {
    let f = fixture();
    let uri = format!("/sensors/{ENV_RD}/data?modality=temperature&from=0&to=10");
    let (s, data): (_, SensorData) = get_json(&app(&f), &uri).await;
    assert_eq!(s, StatusCode::OK);
    assert!(data.series.is_empty() && data.anomalies.is_empty());
}

#[tokio::test]
async fn bad_sensor_requests_are_rejected() {
    let f = fixture();
    let app = app(&f);
    let cases = [
        (format!("/sensors/{ENV_RD}/data?modality=temperature&from=10&to=5"), StatusCode::BAD_REQUEST),
        (format!("/sensors/{ENV_RD}/data?modality=pressure"), StatusCode::BAD_REQUEST),
        (format!("/sensors/{ENV_RD}/data"), StatusCode::BAD_REQUEST),
        ("/sensors/shelly2-rdRoom/data?modality=co2".to_string(), StatusCode::BAD_REQUEST),
        ("/sensors/nope/data?modality=co2".to_string(), StatusCode::NOT_FOUND),
        (format!("/sensors/{ENV_RD}/forecast?modality=temperature&horizon=0"), StatusCode::BAD_REQUEST),
        (format!("/sensors/{ENV_RD}/forecast?modality=temperature&horizon=61"), StatusCode::BAD_REQUEST),
        (format!("/sensors/{ENV_RD}/forecast?modality=co2&horizon=3"), StatusCode::SERVICE_UNAVAILABLE),
    ];
    for (uri, want) in cases {
        let (s, body): (_, ErrorBody) = get_json(&app, &uri).await;
        assert_eq!(s, want, "{uri}: {}", body.error);
        assert_eq!(body.status, want.as_u16());
    }
}

#[tokio::test]
async fn forecast_steps_one_cadence_at_a_time() {
    let f = fixture();
    let (s, fc): (_, Forecast) = get_json(&app(&f), &format!("/sensors/{ENV_RD}/forecast?modality=temperature&horizon=3")).await;
    assert_eq!(s, StatusCode::OK);
    let ts: Vec<i64> = fc.points.iter().map(|p| p.timestamp).collect();
    assert_eq!(ts, [fc.origin + CADENCE, fc.origin + 2 * CADENCE, fc.origin + 3 * CADENCE]);
    assert_eq!(fc.origin, MONDAY + 36 * 3600 - CADENCE);
}

#[tokio::test]
async fn constant_history_forecasts_its_constant() {
    let building = demo_building();
    let readings: Vec<SensorReading> = (0..10)
        .map(|k| SensorReading::new(ENV_RD, "rdRoom", Modality::Temperature, 21.0, MONDAY + k * CADENCE).unwrap())
        .collect();
    let config = ServiceConfig { cadence_secs: CADENCE, ..ServiceConfig::default() };
    let f = fixture_with(building, readings, config, true);
    let fc = f.service.forecast(ENV_RD, Modality::Temperature, 60).unwrap();
    assert_eq!(fc.points.len(), 60);
    for p in &fc.points {
        assert!((p.value - 21.0).abs() < 0.05, "{}", p.value);
    }
}

#[tokio::test]
async fn short_history_is_a_conflict_naming_the_count() {
    let readings: Vec<SensorReading> = (0..2)
        .map(|k| SensorReading::new(ENV_RD, "rdRoom", Modality::Temperature, 21.0, MONDAY + k * CADENCE).unwrap())
        .collect();
    let f = fixture_with(demo_building(), readings, ServiceConfig::default(), true);
    let (s, body): (_, ErrorBody) = get_json(&app(&f), &format!("/sensors/{ENV_RD}/forecast?modality=temperature&horizon=3")).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert!(body.error.contains("3 recent readings required"), "{}", body.error);
}

#[tokio::test]
async fn repeated_gets_are_identical() {
    let f = fixture();
    let app = app(&f);
    let uris = [
        "/rooms".to_string(),
        "/rooms/rdRoom".to_string(),
        "/rooms/attic".to_string(),
        format!("/sensors/{ENV_RD}/data?modality=temperature"),
        format!("/sensors/{ENV_RD}/forecast?modality=temperature&horizon=5"),
        "/metrics/summary".to_string(),
        "/healthz".to_string(),
    ];
    for uri in &uris {
        let a = get(&app, uri).await;
        let b = get(&app, uri).await;
        assert_eq!(a, b, "{uri}");
    }
}

#[tokio::test]
async fn summary_counts_what_was_consumed() {
    let f = fixture();
    let (_, s): (_, Summary) = get_json(&app(&f), "/metrics/summary").await;
    assert_eq!(s.rooms, 4);
    assert_eq!(s.devices, 8);
    assert_eq!(s.readings, f.readings.len());
    assert_eq!(s.delivered, f.readings.len() as u64);
    assert_eq!(s.transfers, 8);
    assert_eq!(s.newest, Some(MONDAY + 36 * 3600 - CADENCE));
    assert!(s.models.presence);
    assert_eq!(s.models.anomaly, [Modality::Temperature]);
    let (h, body) = get(&app(&f), "/healthz").await;
    assert_eq!((h, body.as_slice()), (StatusCode::OK, br#"{"status":"ok"}"#.as_slice()));
}

#[tokio::test]
async fn dsp_messages_reach_the_provider() {
    let f = fixture();
    let app = app(&f);
    let msg = serde_json::json!({
        "message_type": "CONTRACT_REQUESTED",
        "negotiation_id": "http-n1",
        "sender": CONSUMER,
        "payload": { "asset_id": provider::asset_id(ENV_RD) },
    });
    let req = Request::post("/dsp").header("content-type", "application/json").body(Body::from(msg.to_string())).unwrap();
    let (s, body) = call(&app, req).await;
    assert_eq!(s, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let out: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(out["to"], "REQUESTED");

    // Offered by the wrong party.
    let bad = serde_json::json!({ "message_type": "CONTRACT_OFFERED", "negotiation_id": "http-n1", "sender": CONSUMER });
    let req = Request::post("/dsp").header("content-type", "application/json").body(Body::from(bad.to_string())).unwrap();
    assert_eq!(call(&app, req).await.0, StatusCode::CONFLICT);

    let req = Request::post("/dsp").header("content-type", "application/json").body(Body::from("{")).unwrap();
    assert_eq!(call(&app, req).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn dsp_is_not_routed_without_a_provider() {
    let f = fixture();
    let app = router(AppState { service: f.service.clone(), provider: None }, None);
    let req = Request::post("/dsp").header("content-type", "application/json").body(Body::from("{}")).unwrap();
    assert_eq!(call(&app, req).await.0, StatusCode::NOT_FOUND);
}

#[test]
fn denied_consumer_cannot_subscribe() {
    let building = demo_building();
    let (p, _) = provider::publish("p", &building, Vec::new(), &UsagePolicy::deny_all("monitoring"), 60, 0).unwrap();
    let service = BuildingService::new(building, CONSUMER, ServiceConfig::default()).unwrap();
    let all = TimeWindow::new(0, 10).unwrap();
    let err = service.subscribe(&mut InMemoryBus::default(), &p, &provider::asset_id(ENV_RD), all, 0).unwrap_err();
    match err {
        ServiceError::Denied { state, .. } => assert_eq!(state, "TERMINATED"),
        other => panic!("{other}"),
    }
    assert!(service.store().is_empty());
}

#[test]
fn consumer_store_survives_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig { cadence_secs: CADENCE, store_path: Some(dir.path().join("consumer.ndjson")), ..ServiceConfig::default() };
    let (readings, _) = provider_readings();
    let n = readings.len();
    let first = fixture_with(demo_building(), readings, config.clone(), false);
    first.service.flush().unwrap();
    let before = first.service.room("rdRoom").unwrap();
    drop(first);
    let again = BuildingService::new(demo_building(), CONSUMER, config).unwrap();
    assert_eq!(again.store().len(), n);
    assert_eq!(again.room("rdRoom").unwrap(), before);
}

#[tokio::test]
async fn static_bundle_is_served_as_fallback() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>dash</html>").unwrap();
    let f = fixture();
    let app = router(AppState { service: f.service.clone(), provider: None }, Some(dir.path().to_path_buf()));
    let (s, body) = get(&app, "/index.html").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, b"<html>dash</html>");
    assert_eq!(get(&app, "/rooms").await.0, StatusCode::OK);
}
