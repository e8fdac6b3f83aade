// SPDX-License-Identifier: Apache-2.0

//! `RunConfig`: one TOML file with nested sections. Every key has a default,
//! unknown keys are rejected, and command-line flags override the file.
//!
//! ```toml
//! rng_seed = 7
//!
//! [simulation]
//! days = 3
//! cadence_secs = 120
//!
//! [service]
//! port = 9000
//! ```

use std::path::{Path, PathBuf};

use edgespace_core::dataspace::UsagePolicy;
use edgespace_core::ingest::SyntheticProfile;
use edgespace_core::orchestrator::{default_topology, NodeSpec, DEFAULT_HEARTBEAT_TIMEOUT};
use edgespace_core::pipeline::{AnomalyGrid, ForecastGrid, PresenceGrid, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS};
use edgespace_core::{demo_building, Building, Device, EpochSecs, Room};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Monday 2023-11-20 00:00 UTC.
pub const DEFAULT_START: EpochSecs = 1_700_438_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub rng_seed: u64,
    pub paths: Paths,
    pub building: BuildingConfig,
    pub simulation: Simulation,
    pub grids: Grids,
    pub dataspace: DataspaceConfig,
    pub topology: Topology,
    pub service: ServiceSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rng_seed: 42,
            paths: Paths::default(),
            building: BuildingConfig::default(),
            simulation: Simulation::default(),
            grids: Grids::default(),
            dataspace: DataspaceConfig::default(),
            topology: Topology::default(),
            service: ServiceSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub model_dir: PathBuf,
    pub log_dir: PathBuf,
    /// Consumer store, trained models and demo artifacts.
    pub state_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { data_dir: "data".into(), model_dir: "models".into(), log_dir: "logs".into(), state_dir: "state".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomConfig {
    pub room_id: String,
    pub name: String,
    pub devices: Vec<Device>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildingConfig {
    pub rooms: Vec<RoomConfig>,
}

impl Default for BuildingConfig {
    fn default() -> Self {
        let b = demo_building();
        let rooms = b
            .rooms()
            .map(|r| RoomConfig {
                room_id: r.room_id.clone(),
                name: r.name.clone(),
                devices: b.room_devices(r).cloned().collect(),
            })
            .collect();
        Self { rooms }
    }
}

impl BuildingConfig {
    pub fn to_building(&self) -> Result<Building, CliError> {
        let mut rooms = Vec::new();
        let mut devices = Vec::new();
        for r in &self.rooms {
            rooms.push(Room {
                room_id: r.room_id.clone(),
                name: r.name.clone(),
                device_ids: r.devices.iter().map(|d| d.device_id.clone()).collect(),
            });
            devices.extend(r.devices.iter().cloned());
        }
        Building::new(rooms, devices).map_err(|e| CliError::Config(format!("building: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Simulation {
    /// Start of the simulated history, epoch seconds.
    pub start: EpochSecs,
    pub days: u32,
    pub cadence_secs: i64,
    /// Length of the live stream the demo publishes after the history.
    pub live_hours: u32,
    /// Room whose readings form the labelled occupancy table.
    pub presence_room: String,
    pub profile: SyntheticProfile,
}

impl Default for Simulation {
    fn default() -> Self {
        Self {
            start: DEFAULT_START,
            days: 7,
            cadence_secs: 300,
            live_hours: 36,
            presence_room: "rdRoom".into(),
            profile: SyntheticProfile::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grids {
    pub anomaly: AnomalyGrid,
    pub presence: PresenceGrid,
    pub forecast: ForecastGrid,
    pub epochs: usize,
    pub batch_size: usize,
    pub rebalance: bool,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            anomaly: AnomalyGrid::default(),
            presence: PresenceGrid::default(),
            forecast: ForecastGrid::default(),
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            rebalance: false,
        }
    }
}

impl Grids {
    /// Small grids for the scripted demo and `serve` bootstrap.
    pub fn quick() -> Self {
        Self {
            anomaly: AnomalyGrid { n_estimators: vec![100], max_samples: vec![0.8], contamination: vec![0.01, 0.05] },
            presence: PresenceGrid { n_estimators: vec![50], max_depth: vec![Some(10)], min_samples_split: vec![2] },
            forecast: ForecastGrid { learning_rate: vec![0.01], width: vec![64] },
            epochs: 20,
            batch_size: DEFAULT_BATCH_SIZE,
            rebalance: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataspaceConfig {
    pub provider_id: String,
    pub consumer_id: String,
    pub policy: UsagePolicy,
}

impl Default for DataspaceConfig {
    fn default() -> Self {
        Self {
            provider_id: "building-provider".into(),
            consumer_id: "monitoring-app".into(),
            policy: UsagePolicy::allow(["monitoring-app"], "building-monitoring"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    pub heartbeat_timeout: u64,
}

impl Default for Topology {
    fn default() -> Self {
        Self { nodes: default_topology(), heartbeat_timeout: DEFAULT_HEARTBEAT_TIMEOUT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceSection {
    pub host: String,
    pub port: u16,
    /// Staleness cadence; the simulation cadence when absent.
    pub cadence_secs: Option<i64>,
    pub retention_secs: Option<i64>,
    /// Built dashboard bundle.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self { host: "127.0.0.1".into(), port: 8080, cadence_secs: None, retention_secs: None, static_dir: None }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults when `path` is None.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text).map_err(|e| match e {
                    CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.building.to_building()?;
        self.simulation.profile.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.simulation.days == 0 {
            return Err(CliError::Config("simulation.days must be > 0".into()));
        }
        if self.grids.epochs == 0 || self.grids.batch_size == 0 {
            return Err(CliError::Config("grids.epochs and grids.batch_size must be > 0".into()));
        }
        if self.topology.nodes.is_empty() {
            return Err(CliError::Config("topology.nodes is empty".into()));
        }
        if self.service.cadence_secs.is_some_and(|c| c <= 0) {
            return Err(CliError::Config("service.cadence_secs must be > 0".into()));
        }
        Ok(())
    }

    pub fn service_cadence(&self) -> i64 {
        self.service.cadence_secs.unwrap_or(self.simulation.cadence_secs)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("[simulation]\ndayz = 3\n").unwrap_err();
        assert!(err.to_string().contains("dayz"), "{err}");
        assert!(RunConfig::from_toml("colour = 1\n").is_err());
    }

    #[test]
    fn nested_keys_override_only_themselves() {
        let cfg = RunConfig::from_toml("rng_seed = 9\n[simulation]\ndays = 2\n[service]\nport = 9100\n").unwrap();
        assert_eq!(cfg.rng_seed, 9);
        assert_eq!(cfg.simulation.days, 2);
        assert_eq!(cfg.simulation.cadence_secs, 300);
        assert_eq!(cfg.service.port, 9100);
        assert_eq!(cfg.grids, Grids::default());
    }

    #[test]
    fn custom_building_is_validated() {
        let bad = r#"
            [[building.rooms]]
            room_id = "a"
            name = "A"
            devices = [{ device_id = "m1", kind = "motion_switch", modalities = ["temperature"] }]
        "#;
        assert!(RunConfig::from_toml(bad).is_err());
        let good = bad.replace("[\"temperature\"]", "[\"motion\"]");
        let cfg = RunConfig::from_toml(&good).unwrap();
        assert_eq!(cfg.building.to_building().unwrap().rooms().count(), 1);
    }
}
