// SPDX-License-Identifier: Apache-2.0

//! Dataset adapters, the synthetic smart-office generator and timed replay.
//!
//! Two on-disk layouts are understood:
//!
//! * the normalized reading CSV, `timestamp,room_id,device_id,modality,value`
//!   with integer epoch seconds and lower-case modality names;
//! * the public occupancy-detection CSV (`date, Temperature, Humidity, Light,
//!   CO2, [HumidityRatio,] Occupancy`), matched case-insensitively. Rows that
//!   carry one more field than the header (the unnamed row-index column those
//!   files ship with) are accepted.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::{DateTime, Datelike, NaiveDateTime, Timelike};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Building, DomainError, EpochSecs, Modality, PlausibilityRules, SensorReading, TimeWindow,
};
use crate::seed;

pub const NORMALIZED_HEADER: [&str; 5] = ["timestamp", "room_id", "device_id", "modality", "value"];
pub const MIN_CADENCE_SECS: i64 = 10;
pub const MAX_CADENCE_SECS: i64 = 3600;
pub const DEFAULT_CADENCE_SECS: i64 = 60;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })
}

fn create(path: &Path) -> Result<File, IngestError> {
    File::create(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct NormalizedLoad {
    pub readings: Vec<SensorReading>,
    pub rejections: Vec<Rejection>,
}

pub fn load_normalized_csv(path: impl AsRef<Path>) -> Result<NormalizedLoad, IngestError> {
    read_normalized_csv(open(path.as_ref())?)
}

pub fn read_normalized_csv<R: Read>(reader: R) -> Result<NormalizedLoad, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<String> = header.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if names != NORMALIZED_HEADER {
        return Err(IngestError::Format(format!(
            "expected header `{}`, found `{}`",
            NORMALIZED_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut out = NormalizedLoad::default();
    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                out.rejections.push(Rejection { line, reason: e.to_string() });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match parse_normalized_row(&record) {
            Ok(r) => out.readings.push(r),
            Err(reason) => out.rejections.push(Rejection { line, reason }),
        }
    }
    sort_per_device(&mut out.readings);
    Ok(out)
}

fn parse_normalized_row(record: &csv::StringRecord) -> Result<SensorReading, String> {
    if record.len() != NORMALIZED_HEADER.len() {
        return Err(format!("expected 5 fields, found {}", record.len()));
    }
    let ts: i64 = record[0].trim().parse().map_err(|_| format!("bad timestamp `{}`", &record[0]))?;
    let modality: Modality = record[3].parse().map_err(|e: DomainError| e.to_string())?;
    let value: f64 = record[4].trim().parse().map_err(|_| format!("bad value `{}`", &record[4]))?;
    SensorReading::new(record[2].trim(), record[1].trim(), modality, value, ts).map_err(|e| e.to_string())
}

/// Sorts each device's readings by time while keeping the slots the device
/// occupies in the overall sequence. Already per-device-sorted input is left
/// untouched.
fn sort_per_device(readings: &mut [SensorReading]) {
    let mut slots: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, r) in readings.iter().enumerate() {
        slots.entry(r.device_id().to_string()).or_default().push(i);
    }
    for idx in slots.values() {
        if idx.windows(2).all(|w| readings[w[0]].timestamp() <= readings[w[1]].timestamp()) {
            continue;
        }
        let mut items: Vec<SensorReading> = idx.iter().map(|&i| readings[i].clone()).collect();
        items.sort_by_key(|r| r.timestamp());
        for (slot, item) in idx.iter().zip(items) {
            readings[*slot] = item;
        }
    }
}

pub fn write_normalized_csv(path: impl AsRef<Path>, readings: &[SensorReading]) -> Result<(), IngestError> {
    let f = create(path.as_ref())?;
    write_normalized(f, readings)
}

pub fn write_normalized<W: Write>(writer: W, readings: &[SensorReading]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(NORMALIZED_HEADER)?;
    for r in readings {
        w.write_record([
            r.timestamp().to_string(),
            r.room_id().to_string(),
            r.device_id().to_string(),
            r.modality().as_str().to_string(),
            r.value().to_string(),
        ])?;
    }
    w.flush().map_err(|source| IngestError::Io { path: "<writer>".into(), source })?;
    Ok(())
}

/// One row of the occupancy-labelled environmental dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyRecord {
    pub timestamp: EpochSecs,
    pub temperature: f64,
    pub humidity: f64,
    pub light: f64,
    pub co2: f64,
    pub occupancy: u8,
}

impl OccupancyRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.occupancy > 1 {
            return Err(format!("occupancy label must be 0 or 1, got {}", self.occupancy));
        }
        for (name, v) in [
            ("temperature", self.temperature),
            ("humidity", self.humidity),
            ("light", self.light),
            ("co2", self.co2),
        ] {
            if !v.is_finite() {
                return Err(format!("{name} is not finite"));
            }
        }
        Ok(())
    }

    /// (temperature, humidity, CO2): the presence model's feature order.
    pub fn features(&self) -> [f64; 3] {
        [self.temperature, self.humidity, self.co2]
    }
}

const OCCUPANCY_COLUMNS: [&str; 6] = ["date", "temperature", "humidity", "light", "co2", "occupancy"];
const OCCUPANCY_DATE_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

pub fn load_occupancy_csv(path: impl AsRef<Path>) -> Result<Vec<OccupancyRecord>, IngestError> {
    read_occupancy_csv(open(path.as_ref())?)
}

pub fn read_occupancy_csv<R: Read>(reader: R) -> Result<Vec<OccupancyRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<String> = header.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    let mut cols = [0usize; 6];
    for (slot, want) in cols.iter_mut().zip(OCCUPANCY_COLUMNS) {
        *slot = names
            .iter()
            .position(|n| n == want)
            .ok_or_else(|| IngestError::MissingColumn(want.to_string()))?;
    }

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let shift = match record.len() {
            n if n == header.len() => 0,
            n if n == header.len() + 1 => 1,
            n => {
                return Err(IngestError::Row {
                    line,
                    reason: format!("expected {} fields, found {n}", header.len()),
                })
            }
        };
        let field = |i: usize| record[cols[i] + shift].trim();
        let num = |i: usize| -> Result<f64, IngestError> {
            field(i).parse::<f64>().map_err(|_| IngestError::Row {
                line,
                reason: format!("bad {} value `{}`", OCCUPANCY_COLUMNS[i], field(i)),
            })
        };
        let timestamp = parse_datetime(field(0))
            .ok_or_else(|| IngestError::Row { line, reason: format!("bad date `{}`", field(0)) })?;
        let label = num(5)?;
        let rec = OccupancyRecord {
            timestamp,
            temperature: num(1)?,
            humidity: num(2)?,
            light: num(3)?,
            co2: num(4)?,
            occupancy: if label == 0.0 {
                0
            } else if label == 1.0 {
                1
            } else {
                return Err(IngestError::Row { line, reason: format!("occupancy label `{label}`") });
            },
        };
        rec.validate().map_err(|reason| IngestError::Row { line, reason })?;
        out.push(rec);
    }
    out.sort_by_key(|r| r.timestamp);
    Ok(out)
}

fn parse_datetime(s: &str) -> Option<EpochSecs> {
    if let Ok(secs) = s.parse::<i64>() {
        return Some(secs);
    }
    for fmt in [OCCUPANCY_DATE_FORMAT, "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    DateTime::parse_from_rfc3339(s).ok().map(|d| d.timestamp())
}

pub fn write_occupancy_csv(path: impl AsRef<Path>, records: &[OccupancyRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(create(path.as_ref())?);
    w.write_record(["date", "Temperature", "Humidity", "Light", "CO2", "Occupancy"])?;
    for r in records {
        let date = DateTime::from_timestamp(r.timestamp, 0)
            .map(|d| d.format(OCCUPANCY_DATE_FORMAT).to_string())
            .unwrap_or_else(|| r.timestamp.to_string());
        w.write_record([
            date,
            r.temperature.to_string(),
            r.humidity.to_string(),
            r.light.to_string(),
            r.co2.to_string(),
            r.occupancy.to_string(),
        ])?;
    }
    w.flush().map_err(|source| IngestError::Io { path: path.as_ref().display().to_string(), source })?;
    Ok(())
}

/// Daily sinusoid `mean + amplitude * sin(2π (hour - phase) / 24)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiurnalCurve {
    pub mean: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase_hours: f64,
    /// Multiplier on the profile-wide noise sigma for this modality.
    #[serde(default = "one")]
    pub noise_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl DiurnalCurve {
    pub fn constant(mean: f64) -> Self {
        Self { mean, amplitude: 0.0, phase_hours: 0.0, noise_scale: 1.0 }
    }

    pub fn at_hour(&self, hour: f64) -> f64 {
        self.mean + self.amplitude * (2.0 * PI * (hour - self.phase_hours) / 24.0).sin()
    }
}

/// Weekday 0 = Monday. Hours are fractional, `start <= h < end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancyInterval {
    pub weekday: u8,
    pub start_hour: f64,
    pub end_hour: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OccupiedEffect {
    pub co2_ramp_ppm_per_hour: f64,
    pub temperature_offset: f64,
    pub light_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// Negative error codes.
    Sentinel,
    /// Values above the plausibility maximum.
    OutOfRange,
    /// Either of the above with equal probability.
    #[default]
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnomalyInjection {
    pub rate: f64,
    pub kind: AnomalyKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticProfile {
    pub baselines: BTreeMap<Modality, DiurnalCurve>,
    pub noise_sigma: f64,
    #[serde(default)]
    pub schedule: Vec<OccupancyInterval>,
    #[serde(default)]
    pub occupied_effect: OccupiedEffect,
    #[serde(default)]
    pub anomalies: AnomalyInjection,
    #[serde(default)]
    pub plausibility: PlausibilityRules,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        let baselines = [
            (Modality::Temperature, DiurnalCurve { mean: 21.0, amplitude: 1.5, phase_hours: 9.0, noise_scale: 0.1 }),
            (Modality::Humidity, DiurnalCurve { mean: 45.0, amplitude: 5.0, phase_hours: 3.0, noise_scale: 0.5 }),
            (Modality::Co2, DiurnalCurve { mean: 450.0, amplitude: 20.0, phase_hours: 9.0, noise_scale: 10.0 }),
            (Modality::Light, DiurnalCurve { mean: 300.0, amplitude: 200.0, phase_hours: 6.0, noise_scale: 10.0 }),
        ]
        .into_iter()
        .collect();
        let schedule = (0..5)
            .map(|weekday| OccupancyInterval { weekday, start_hour: 9.0, end_hour: 17.0 })
            .collect();
        Self {
            baselines,
            noise_sigma: 1.0,
            schedule,
            occupied_effect: OccupiedEffect {
                co2_ramp_ppm_per_hour: 80.0,
                temperature_offset: 1.0,
                light_offset: 200.0,
            },
            anomalies: AnomalyInjection { rate: 0.01, kind: AnomalyKind::Mixed },
            plausibility: PlausibilityRules::default(),
        }
    }
}

impl SyntheticProfile {
    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.noise_sigma >= 0.0) {
            return Err(IngestError::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(0.0..=0.5).contains(&self.anomalies.rate) {
            return Err(IngestError::Config(format!(
                "anomaly rate must be in [0, 0.5], got {}",
                self.anomalies.rate
            )));
        }
        for iv in &self.schedule {
            if iv.weekday > 6 || !(iv.start_hour < iv.end_hour) {
                return Err(IngestError::Config(format!("bad occupancy interval {iv:?}")));
            }
        }
        self.plausibility.validate()?;
        Ok(())
    }

    /// Start hour of the active occupancy interval at `t`, if any.
    pub fn occupied_since(&self, t: EpochSecs) -> Option<f64> {
        let dt = DateTime::from_timestamp(t, 0)?;
        let weekday = dt.weekday().num_days_from_monday() as u8;
        let hour = f64::from(dt.hour()) + f64::from(dt.minute()) / 60.0 + f64::from(dt.second()) / 3600.0;
        self.schedule
            .iter()
            .find(|iv| iv.weekday == weekday && iv.start_hour <= hour && hour < iv.end_hour)
            .map(|iv| hour - iv.start_hour)
    }

    pub fn is_occupied(&self, t: EpochSecs) -> bool {
        self.occupied_since(t).is_some()
    }

    /// Noise-free value for a modality at `t` (baseline plus occupancy effect).
    pub fn expected_value(&self, modality: Modality, t: EpochSecs) -> Option<f64> {
        if modality == Modality::Motion {
            return Some(if self.is_occupied(t) { 1.0 } else { 0.0 });
        }
        let curve = self.baselines.get(&modality)?;
        let hour = (t.rem_euclid(86_400)) as f64 / 3600.0;
        let mut v = curve.at_hour(hour);
        if let Some(elapsed) = self.occupied_since(t) {
            let e = &self.occupied_effect;
            v += match modality {
                Modality::Co2 => e.co2_ramp_ppm_per_hour * elapsed,
                Modality::Temperature => e.temperature_offset,
                Modality::Light => e.light_offset,
                _ => 0.0,
            };
        }
        Some(v)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SyntheticData {
    pub readings: Vec<SensorReading>,
    /// Indices into `readings` of injected anomalies, ascending.
    pub anomaly_index: Vec<usize>,
}

impl SyntheticData {
    pub fn labels(&self) -> Vec<bool> {
        let mut labels = vec![false; self.readings.len()];
        for &i in &self.anomaly_index {
            labels[i] = true;
        }
        labels
    }
}

/// Generates one reading per device, per modality and per cadence tick over
/// `[from, to)`. Deterministic per seed; every device/modality pair draws from
/// its own named sub-stream.
pub fn generate_synthetic(
    profile: &SyntheticProfile,
    building: &Building,
    window: TimeWindow,
    cadence_secs: i64,
    rng_seed: u64,
) -> Result<SyntheticData, IngestError> {
    profile.validate()?;
    if !(MIN_CADENCE_SECS..=MAX_CADENCE_SECS).contains(&cadence_secs) {
        return Err(IngestError::Config(format!(
            "cadence must be within [{MIN_CADENCE_SECS}, {MAX_CADENCE_SECS}] s, got {cadence_secs}"
        )));
    }
    if window.duration() <= 0 {
        return Err(IngestError::Config("time window is empty".into()));
    }

    struct Stream {
        room_id: String,
        device_id: String,
        modality: Modality,
        rng: seed::Rng,
        sigma: f64,
    }
    let mut streams = Vec::new();
    for room in building.rooms() {
        for device in building.room_devices(room) {
            for &m in &device.modalities {
                if m != Modality::Motion && !profile.baselines.contains_key(&m) {
                    return Err(IngestError::Config(format!("profile has no baseline for {m}")));
                }
                let label = format!("synthetic/{}/{}", device.device_id, m);
                let scale = profile.baselines.get(&m).map(|c| c.noise_scale).unwrap_or(0.0);
                streams.push(Stream {
                    room_id: room.room_id.clone(),
                    device_id: device.device_id.clone(),
                    modality: m,
                    rng: seed::rng(seed::derive(rng_seed, &label)),
                    sigma: profile.noise_sigma * scale,
                });
            }
        }
    }

    let mut data = SyntheticData::default();
    let mut t = window.from();
    while t < window.to() {
        for s in &mut streams {
            let mut value = profile.expected_value(s.modality, t).unwrap_or(0.0);
            if s.modality != Modality::Motion {
                if s.sigma > 0.0 {
                    let normal = Normal::new(0.0, s.sigma).expect("sigma is finite and positive");
                    value += normal.sample(&mut s.rng);
                }
                // The injection draw is consumed even at rate 0 so that the
                // noise sequence does not depend on the anomaly rate.
                let u: f64 = s.rng.random();
                if u < profile.anomalies.rate {
                    value = inject_anomaly(profile, s.modality, &mut s.rng);
                    data.anomaly_index.push(data.readings.len());
                }
            }
            data.readings.push(SensorReading::new(&s.device_id, &s.room_id, s.modality, value, t)?);
        }
        t += cadence_secs;
    }
    Ok(data)
}

fn inject_anomaly(profile: &SyntheticProfile, modality: Modality, rng: &mut seed::Rng) -> f64 {
    let sentinel = match profile.anomalies.kind {
        AnomalyKind::Sentinel => true,
        AnomalyKind::OutOfRange => false,
        AnomalyKind::Mixed => rng.random_bool(0.5),
    };
    match (sentinel, profile.plausibility.get(modality)) {
        (false, Some(range)) => range.max + rng.random_range(0.05..1.0) * (range.max - range.min),
        _ => -rng.random_range(1.0..1000.0),
    }
}

/// Aggregates a room's readings into labelled occupancy rows, one per
/// timestamp at which all four environmental modalities are present. Values
/// from several devices are averaged.
pub fn occupancy_records(
    readings: &[SensorReading],
    room_id: &str,
    label: impl Fn(EpochSecs) -> bool,
) -> Vec<OccupancyRecord> {
    let mut by_time: BTreeMap<EpochSecs, [(f64, u32); 4]> = BTreeMap::new();
    for r in readings.iter().filter(|r| r.room_id() == room_id) {
        let slot = match r.modality() {
            Modality::Temperature => 0,
            Modality::Humidity => 1,
            Modality::Light => 2,
            Modality::Co2 => 3,
            Modality::Motion => continue,
        };
        let acc = &mut by_time.entry(r.timestamp()).or_insert([(0.0, 0); 4])[slot];
        acc.0 += r.value();
        acc.1 += 1;
    }
    by_time
        .into_iter()
        .filter(|(_, acc)| acc.iter().all(|(_, n)| *n > 0))
        .map(|(t, acc)| {
            let mean = |i: usize| acc[i].0 / f64::from(acc[i].1);
            OccupancyRecord {
                timestamp: t,
                temperature: mean(0),
                humidity: mean(1),
                light: mean(2),
                co2: mean(3),
                occupancy: u8::from(label(t)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Speedup {
    /// Deliver as fast as possible.
    Unlimited,
    /// Scale recorded inter-reading gaps by `1 / factor`.
    Factor(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySummary {
    pub delivered: usize,
    pub wall_clock: Duration,
    pub last_delivered: Option<EpochSecs>,
    /// Set when the sink failed and the replay stopped early.
    pub aborted: Option<String>,
}

/// Delivers readings to `sink` in timestamp order, sleeping between readings
/// according to `speedup`. A sink error stops the replay.
pub fn replay_stream<E: std::fmt::Display>(
    readings: &[SensorReading],
    speedup: Speedup,
    mut sink: impl FnMut(&SensorReading) -> Result<(), E>,
) -> Result<ReplaySummary, IngestError> {
    if let Speedup::Factor(f) = speedup {
        if !(f > 0.0) {
            return Err(IngestError::Config(format!("speedup must be > 0, got {f}")));
        }
    }
    let mut order: Vec<&SensorReading> = readings.iter().collect();
    order.sort_by_key(|r| r.timestamp());

    let started = Instant::now();
    let mut summary = ReplaySummary {
        delivered: 0,
        wall_clock: Duration::ZERO,
        last_delivered: None,
        aborted: None,
    };
    let first_ts = order.first().map(|r| r.timestamp());
    for r in order {
        if let (Speedup::Factor(f), Some(t0)) = (speedup, first_ts) {
            let due = Duration::from_secs_f64((r.timestamp() - t0) as f64 / f);
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        if let Err(e) = sink(r) {
            summary.aborted = Some(e.to_string());
            break;
        }
        summary.delivered += 1;
        summary.last_delivered = Some(r.timestamp());
    }
    summary.wall_clock = started.elapsed();
    Ok(summary)
}
