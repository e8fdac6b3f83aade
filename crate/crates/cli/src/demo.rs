// SPDX-License-Identifier: Apache-2.0

//! `demo-dataspace`: the scripted end-to-end run. The orchestrator places the
//! services, the provider publishes one asset per device, the consumer
//! negotiates and streams the live window into the building service, and the
//! trained models annotate what arrives.
//!
//! State directory layout after a run:
//!
//! ```text
//! consumer.ndjson   consumer store log
//! models/           the model set the service loaded
//! anomalies.csv     readings flagged by the detectors
//! events.ndjson     orchestrator event log
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use edgespace_core::dataspace::{InMemoryBus, ProviderConnector, TransferState, UsagePolicy};
use edgespace_core::orchestrator::{default_descriptors, LogicalTime, Registry, DEFAULT_HEARTBEAT_INTERVAL};
use edgespace_core::{Building, Modality, SensorReading, TimeWindow};
use edgespace_service::provider::{asset_id, publish};
use edgespace_service::{BuildingService, ModelSet, ServiceConfig, ServiceError, Subscription};

use crate::data::{history_window, occupancy_table, synthesize};
use crate::train::{anomaly_models, forecast_data, forecast_model, presence_model, CLIMATE};
use crate::config::Grids;
use crate::{ensure_dir, CliError, RunConfig};

pub const STORE_FILE: &str = "consumer.ndjson";
pub const MODELS_DIR: &str = "models";
pub const FLAGGED_FILE: &str = "anomalies.csv";
pub const EVENTS_FILE: &str = "events.ndjson";
pub const FINAL_LINE: &str = "FINALIZED → STARTED → COMPLETED";

/// Readings pulled per transfer per orchestrator tick.
const BATCH: usize = 100;
/// The node `--kill-edge-node` takes down.
const EDGE_NODE: &str = "edge-1";

#[derive(Debug, Clone, Default)]
pub struct DemoOptions {
    /// Publish under a policy that admits nobody.
    pub deny_consumer: bool,
    pub kill_edge_node: bool,
    /// Overrides `paths.state_dir`.
    pub state_dir: Option<PathBuf>,
    /// Load models from here instead of training them.
    pub models: Option<PathBuf>,
    /// Train with the configured grids rather than the quick ones.
    pub full_grids: bool,
}

pub struct DemoOutcome {
    pub service: Arc<BuildingService>,
    pub provider: Arc<ProviderConnector>,
    pub registry: Registry,
    pub subscriptions: Vec<Subscription>,
    pub flagged: usize,
    pub state_dir: PathBuf,
}

fn svc_err(e: ServiceError) -> CliError {
    CliError::Domain(e.to_string())
}

pub fn live_window(cfg: &RunConfig) -> Result<TimeWindow, CliError> {
    let from = history_window(cfg)?.to();
    TimeWindow::new(from, from + i64::from(cfg.simulation.live_hours) * 3600).map_err(|e| CliError::Config(format!("simulation.live_hours: {e}")))
}

/// The full model set trained on `history` with the grids in `cfg`.
pub fn train_models(cfg: &RunConfig, history: &[SensorReading], labels: &[bool]) -> Result<ModelSet, CliError> {
    let mut set = ModelSet::default();
    for (m, model, _) in anomaly_models(cfg, history, labels)? {
        set.anomaly.insert(m, model);
    }
    let table = occupancy_table(cfg, history, &cfg.simulation.presence_room);
    set.presence = Some(presence_model(cfg, &table)?.0);
    for m in CLIMATE {
        if !history.iter().any(|r| r.modality() == m) {
            continue;
        }
        let fd = forecast_data(cfg, history, m, None)?;
        set.forecast.insert(m, forecast_model(cfg, &fd, &format!("forecast-{m}"))?.0);
    }
    Ok(set)
}

fn sources(building: &Building) -> Vec<String> {
    building.devices().map(|d| d.device_id.clone()).collect()
}

pub fn run(cfg: &RunConfig, opts: &DemoOptions, out: &mut dyn Write) -> Result<DemoOutcome, CliError> {
    let building = cfg.building.to_building()?;
    let state_dir = opts.state_dir.clone().unwrap_or_else(|| cfg.paths.state_dir.clone());
    ensure_dir(&state_dir)?;
    let cadence = cfg.simulation.cadence_secs;

    // Orchestrator placement.
    let mut registry = Registry::new(cfg.topology.nodes.clone()).map_err(|e| CliError::Config(format!("topology: {e}")))?;
    let descriptors = default_descriptors(&sources(&building));
    let plan = registry.plan(&descriptors);
    registry.deploy(&descriptors, &plan, 0).map_err(|e| CliError::Domain(e.to_string()))?;
    writeln!(out, "== placement")?;
    for p in &plan.placements {
        writeln!(out, "{} -> {}", p.instance_id, p.node_id)?;
    }
    for u in &plan.unplaced {
        writeln!(out, "{} unplaced ({:?})", u.instance_id, u.reason)?;
    }

    // Provider side: history for training, the live window for streaming.
    let history = synthesize(cfg, &building, history_window(cfg)?, "simulate")?;
    let live_win = live_window(cfg)?;
    let live = synthesize(cfg, &building, live_win, "live")?;
    let policy = if opts.deny_consumer { UsagePolicy::deny_all(cfg.dataspace.policy.purpose.clone()) } else { cfg.dataspace.policy.clone() };
    let now = live_win.from();
    let (provider, _) = publish(
        &cfg.dataspace.provider_id,
        &building,
        history.readings.iter().chain(&live.readings).cloned(),
        &policy,
        u64::try_from(cadence).unwrap_or(0),
        now,
    )
    .map_err(svc_err)?;
    let provider = Arc::new(provider);
    writeln!(out, "== provider {}: {} assets", cfg.dataspace.provider_id, provider.catalog().len())?;

    // Consumer side.
    let store_path = state_dir.join(STORE_FILE);
    if store_path.exists() {
        std::fs::remove_file(&store_path)?;
    }
    let service = BuildingService::new(
        building.clone(),
        &cfg.dataspace.consumer_id,
        ServiceConfig {
            cadence_secs: cfg.service_cadence(),
            retention_secs: cfg.service.retention_secs,
            store_path: Some(store_path),
            plausibility: cfg.simulation.profile.plausibility.clone(),
        },
    )
    .map_err(svc_err)?;
    let service = Arc::new(service);

    writeln!(out, "== negotiation ({})", cfg.dataspace.consumer_id)?;
    let mut bus = InMemoryBus::default();
    let mut subs = Vec::new();
    for d in building.devices() {
        let asset = asset_id(&d.device_id);
        match service.subscribe(&mut bus, &provider, &asset, live_win, now) {
            Ok(s) => {
                writeln!(out, "{asset}: {} | transfer {}", s.negotiation_trace.join(" → "), s.transfer_trace.join(" → "))?;
                subs.push(s);
            }
            Err(ServiceError::Denied { asset_id, state, reason }) => {
                writeln!(out, "{asset_id}: {state}({reason})")?;
                return Err(CliError::Domain(format!("negotiation for {asset_id} ended {state}({reason})")));
            }
            Err(e) => return Err(svc_err(e)),
        }
    }

    let models = match &opts.models {
        Some(dir) => ModelSet::load_dir(dir).map_err(|e| CliError::Config(e.to_string()))?,
        None => {
            writeln!(out, "== training on {} history readings", history.readings.len())?;
            let mut tc = cfg.clone();
            if !opts.full_grids {
                tc.grids = Grids::quick();
            }
            train_models(&tc, &history.readings, &history.labels())?
        }
    };
    writeln!(
        out,
        "models: presence={} anomaly={:?} forecast={:?}",
        models.presence.is_some(),
        models.anomaly.keys().map(Modality::to_string).collect::<Vec<_>>(),
        models.forecast.keys().map(Modality::to_string).collect::<Vec<_>>()
    )?;
    service.swap_models(models);

    // Stream the live window while the registry ticks.
    writeln!(out, "== streaming {} live readings", live.readings.len())?;
    let timeout = cfg.topology.heartbeat_timeout;
    let mut t: LogicalTime = 0;
    let mut killed_at = None;
    let mut recovered = !opts.kill_edge_node;
    let mut step = 0usize;
    loop {
        step += 1;
        t += DEFAULT_HEARTBEAT_INTERVAL;
        let mut open = 0;
        for s in &subs {
            if provider.transfer(&s.transfer_id).is_some_and(|x| x.state == TransferState::Started) {
                service.consume(&provider, &s.transfer_id, Some(BATCH)).map_err(svc_err)?;
                open += 1;
            }
        }
        if opts.kill_edge_node && killed_at.is_none() && step == 2 {
            registry.kill_node(EDGE_NODE, t).map_err(|e| CliError::Config(e.to_string()))?;
            writeln!(out, "t={t}s: node {EDGE_NODE} killed")?;
            killed_at = Some(t);
        }
        registry.tick(t);
        let report = registry.heartbeat_sweep(t, timeout).map_err(|e| CliError::Domain(e.to_string()))?;
        for id in &report.failed {
            writeln!(out, "t={t}s: {id} failed (no heartbeat for more than {timeout}s)")?;
        }
        for (id, node) in &report.recovered {
            writeln!(out, "t={t}s: {id} recovered on {node}")?;
        }
        for id in &report.pending {
            writeln!(out, "t={t}s: {id} pending")?;
        }
        if killed_at.is_some() && !report.recovered.is_empty() {
            recovered = true;
        }
        if open == 0 && recovered {
            break;
        }
        if step > 10_000 {
            return Err(CliError::Domain("stream did not drain".into()));
        }
    }
    service.flush().map_err(svc_err)?;

    // What the service now reports.
    writeln!(out, "== rooms")?;
    let set = service.models();
    for r in service.rooms() {
        let st = service.room_status(&r.room_id, &set).map_err(svc_err)?;
        let p = st.probability.map(|p| format!(" p={p:.2}")).unwrap_or_default();
        let why = st.reason.map(|s| format!(" ({s})")).unwrap_or_default();
        writeln!(out, "{}: {:?}{p}{why}", r.room_id, st.occupancy)?;
    }
    let flagged = write_flagged(&service, &state_dir.join(FLAGGED_FILE))?;
    let mut per_room: BTreeMap<String, usize> = BTreeMap::new();
    for (room, _, _, _) in &flagged {
        *per_room.entry(room.clone()).or_default() += 1;
    }
    writeln!(out, "== anomalies: {} flagged of {} live readings ({} injected)", flagged.len(), live.readings.len(), live.anomaly_index.len())?;
    for (room, n) in &per_room {
        writeln!(out, "{room}: {n}")?;
    }

    let models_dir = state_dir.join(MODELS_DIR);
    ensure_dir(&models_dir)?;
    set.save_dir(&models_dir).map_err(|e| CliError::Domain(e.to_string()))?;
    write_events(&registry, &state_dir.join(EVENTS_FILE))?;

    let incomplete: Vec<&str> = subs
        .iter()
        .filter(|s| provider.transfer(&s.transfer_id).is_none_or(|x| x.state != TransferState::Completed))
        .map(|s| s.transfer_id.as_str())
        .collect();
    if !incomplete.is_empty() {
        return Err(CliError::Domain(format!("transfers not completed: {}", incomplete.join(", "))));
    }
    writeln!(out, "== {} transfers: {FINAL_LINE}", subs.len())?;
    Ok(DemoOutcome { service, provider, registry, subscriptions: subs, flagged: flagged.len(), state_dir })
}

type Flag = (String, String, Modality, SensorReading);

/// Every stored reading the loaded detectors call anomalous.
fn write_flagged(service: &BuildingService, path: &Path) -> Result<Vec<Flag>, CliError> {
    let mut flags = Vec::new();
    for d in service.building().devices() {
        let room = service.building().room_of(&d.device_id).map(|r| r.room_id.clone()).unwrap_or_default();
        for &m in &d.modalities {
            if m == Modality::Motion {
                continue;
            }
            let data = service.sensor_data(&d.device_id, m, i64::MIN, i64::MAX).map_err(svc_err)?;
            let all = service.store().query(&d.device_id, m, TimeWindow::new(i64::MIN, i64::MAX).expect("full range"));
            for ts in data.anomalies {
                if let Some(r) = all.iter().find(|r| r.timestamp() == ts) {
                    flags.push((room.clone(), d.device_id.clone(), m, r.clone()));
                }
            }
        }
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| CliError::Domain(e.to_string());
    w.write_record(["timestamp", "room_id", "device_id", "modality", "value"]).map_err(err)?;
    for (room, dev, m, r) in &flags {
        w.write_record([r.timestamp().to_string(), room.clone(), dev.clone(), m.to_string(), r.value().to_string()]).map_err(err)?;
    }
    w.flush()?;
    Ok(flags)
}

fn write_events(registry: &Registry, path: &Path) -> Result<(), CliError> {
    let mut text = String::new();
    for e in registry.events() {
        text.push_str(&serde_json::to_string(e).map_err(|e| CliError::Domain(e.to_string()))?);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}
