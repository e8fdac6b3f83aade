// SPDX-License-Identifier: Apache-2.0

//! `simulate` and `import`, plus the data directory layout:
//!
//! ```text
//! readings.csv    normalized readings
//! anomalies.csv   ground truth: timestamp,device_id,modality of injected anomalies
//! occupancy.csv   labelled occupancy table of one room
//! ```

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use edgespace_core::ingest::{
    generate_synthetic, load_normalized_csv, load_occupancy_csv, occupancy_records, write_normalized_csv, write_occupancy_csv,
    IngestError, OccupancyRecord, SyntheticData,
};
use edgespace_core::{seed, Building, EpochSecs, Modality, PlausibilityRules, SensorReading, TimeWindow};

use crate::{ensure_dir, CliError, RunConfig};

pub const READINGS_FILE: &str = "readings.csv";
pub const ANOMALIES_FILE: &str = "anomalies.csv";
pub const OCCUPANCY_FILE: &str = "occupancy.csv";

/// A directory resolves to its conventional file; a file is used as is.
pub fn resolve(path: &Path, file: &str) -> PathBuf {
    if path.is_dir() {
        path.join(file)
    } else {
        path.to_path_buf()
    }
}

pub(crate) fn ingest_err(e: IngestError) -> CliError {
    match e {
        IngestError::Io { .. } | IngestError::Csv(_) | IngestError::Format(_) | IngestError::MissingColumn(_) | IngestError::Config(_) => {
            CliError::Config(e.to_string())
        }
        other => CliError::Domain(other.to_string()),
    }
}

pub type LabelKey = (EpochSecs, String, Modality);

pub fn write_labels(path: &Path, readings: &[SensorReading], index: &[usize]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Domain(format!("{}: {e}", path.display()));
    w.write_record(["timestamp", "device_id", "modality"]).map_err(io)?;
    for &i in index {
        let r = &readings[i];
        w.write_record([r.timestamp().to_string(), r.device_id().to_string(), r.modality().to_string()]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<HashSet<LabelKey>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut out = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let bad = |why: String| CliError::Config(format!("{} row {}: {why}", path.display(), i + 2));
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", rec.len())));
        }
        let t: EpochSecs = rec[0].trim().parse().map_err(|_| bad(format!("bad timestamp `{}`", &rec[0])))?;
        let m: Modality = rec[2].trim().parse().map_err(|e: edgespace_core::DomainError| bad(e.to_string()))?;
        out.insert((t, rec[1].trim().to_string(), m));
    }
    Ok(out)
}

pub fn labels_for(readings: &[SensorReading], truth: &HashSet<LabelKey>) -> Vec<bool> {
    readings.iter().map(|r| truth.contains(&(r.timestamp(), r.device_id().to_string(), r.modality()))).collect()
}

/// Synthetic readings for `window`, drawn from the `label` sub-seed.
pub fn synthesize(cfg: &RunConfig, building: &Building, window: TimeWindow, label: &str) -> Result<SyntheticData, CliError> {
    generate_synthetic(&cfg.simulation.profile, building, window, cfg.simulation.cadence_secs, seed::derive(cfg.rng_seed, label))
        .map_err(ingest_err)
}

pub fn history_window(cfg: &RunConfig) -> Result<TimeWindow, CliError> {
    let s = cfg.simulation.start;
    TimeWindow::new(s, s + i64::from(cfg.simulation.days) * 86_400).map_err(|e| CliError::Config(e.to_string()))
}

/// Occupancy rows of one room built from its plausible readings only.
pub fn occupancy_table(cfg: &RunConfig, readings: &[SensorReading], room_id: &str) -> Vec<OccupancyRecord> {
    let rules: &PlausibilityRules = &cfg.simulation.profile.plausibility;
    let clean: Vec<SensorReading> =
        readings.iter().filter(|r| rules.check_value(r.modality(), r.value()).unwrap_or(true)).cloned().collect();
    let profile = &cfg.simulation.profile;
    occupancy_records(&clean, room_id, |t| profile.is_occupied(t))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SimulateSummary {
    pub readings: usize,
    pub anomalies: usize,
    pub occupancy_rows: usize,
    pub files: Vec<PathBuf>,
}

pub fn simulate(cfg: &RunConfig, out_dir: &Path, out: &mut dyn Write) -> Result<SimulateSummary, CliError> {
    let building = cfg.building.to_building()?;
    if building.room(&cfg.simulation.presence_room).is_none() {
        return Err(CliError::Config(format!("simulation.presence_room `{}` is not a configured room", cfg.simulation.presence_room)));
    }
    let data = synthesize(cfg, &building, history_window(cfg)?, "simulate")?;
    ensure_dir(out_dir)?;
    let files = vec![out_dir.join(READINGS_FILE), out_dir.join(ANOMALIES_FILE), out_dir.join(OCCUPANCY_FILE)];
    write_normalized_csv(&files[0], &data.readings).map_err(ingest_err)?;
    write_labels(&files[1], &data.readings, &data.anomaly_index)?;
    let table = occupancy_table(cfg, &data.readings, &cfg.simulation.presence_room);
    write_occupancy_csv(&files[2], &table).map_err(ingest_err)?;
    let summary =
        SimulateSummary { readings: data.readings.len(), anomalies: data.anomaly_index.len(), occupancy_rows: table.len(), files };
    writeln!(
        out,
        "simulated {} readings ({} injected anomalies), {} occupancy rows for {} -> {}",
        summary.readings,
        summary.anomalies,
        summary.occupancy_rows,
        cfg.simulation.presence_room,
        out_dir.display()
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ImportSummary {
    pub kind: &'static str,
    pub readings: usize,
    pub occupancy_rows: usize,
    pub rejected: usize,
}

/// Imports either a normalized CSV or an occupancy CSV (told apart by the
/// header). Occupancy rows also become readings of `device_id` in `room_id`.
pub fn import(input: &Path, out_dir: &Path, room_id: &str, device_id: &str, out: &mut dyn Write) -> Result<ImportSummary, CliError> {
    let header = std::fs::read_to_string(input)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", input.display())))?
        .lines()
        .next()
        .unwrap_or_default()
        .to_ascii_lowercase();
    ensure_dir(out_dir)?;
    let summary = if header.contains("occupancy") {
        let records = load_occupancy_csv(input).map_err(ingest_err)?;
        let mut readings = Vec::with_capacity(records.len() * 4);
        for r in &records {
            for (m, v) in [
                (Modality::Temperature, r.temperature),
                (Modality::Humidity, r.humidity),
                (Modality::Light, r.light),
                (Modality::Co2, r.co2),
            ] {
                readings.push(SensorReading::new(device_id, room_id, m, v, r.timestamp).map_err(|e| CliError::Domain(e.to_string()))?);
            }
        }
        write_occupancy_csv(out_dir.join(OCCUPANCY_FILE), &records).map_err(ingest_err)?;
        write_normalized_csv(out_dir.join(READINGS_FILE), &readings).map_err(ingest_err)?;
        ImportSummary { kind: "occupancy", readings: readings.len(), occupancy_rows: records.len(), rejected: 0 }
    } else {
        let load = load_normalized_csv(input).map_err(ingest_err)?;
        for r in load.rejections.iter().take(10) {
            writeln!(out, "rejected line {}: {}", r.line, r.reason)?;
        }
        write_normalized_csv(out_dir.join(READINGS_FILE), &load.readings).map_err(ingest_err)?;
        ImportSummary { kind: "normalized", readings: load.readings.len(), occupancy_rows: 0, rejected: load.rejections.len() }
    };
    writeln!(
        out,
        "imported {} file: {} readings, {} occupancy rows, {} rejected -> {}",
        summary.kind,
        summary.readings,
        summary.occupancy_rows,
        summary.rejected,
        out_dir.display()
    )?;
    Ok(summary)
}
