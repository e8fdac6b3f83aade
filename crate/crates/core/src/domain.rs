// SPDX-License-Identifier: Apache-2.0

//! Shared vocabulary: readings, rooms, devices, modalities, time windows and
//! the plausibility rules that make a reading anomalous by construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// UTC instant as whole epoch seconds.
pub type EpochSecs = i64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("reading value must be finite, got {0}")]
    NonFiniteValue(f64),
    #[error("timestamp must be >= 0, got {0}")]
    NegativeTimestamp(i64),
    #[error("unknown modality `{0}`")]
    UnknownModality(String),
    #[error("time window is inverted: from {from} > to {to}")]
    InvertedWindow { from: EpochSecs, to: EpochSecs },
    #[error("no plausibility range configured for {0}")]
    MissingRange(Modality),
    #[error("invalid plausibility range for {modality}: min {min} must be < max {max}")]
    InvalidRange { modality: Modality, min: f64, max: f64 },
    #[error("duplicate room id `{0}`")]
    DuplicateRoom(String),
    #[error("device `{0}` is assigned to more than one room")]
    DeviceInTwoRooms(String),
    #[error("device `{device}` of kind {kind:?} cannot report {modality}")]
    ModalityNotAllowed { device: String, kind: DeviceKind, modality: Modality },
    #[error("room `{room}` references unknown device `{device}`")]
    UnknownDevice { room: String, device: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Temperature,
    Humidity,
    #[serde(rename = "co2")]
    Co2,
    Light,
    Motion,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Temperature,
        Modality::Humidity,
        Modality::Co2,
        Modality::Light,
        Modality::Motion,
    ];

    /// The three modalities the anomaly and presence models consume.
    pub const CLIMATE: [Modality; 3] = [Modality::Temperature, Modality::Humidity, Modality::Co2];

    pub fn unit(self) -> &'static str {
        match self {
            Modality::Temperature => "°C",
            Modality::Humidity => "%RH",
            Modality::Co2 => "ppm",
            Modality::Light => "lux",
            Modality::Motion => "boolean",
        }
    }

    /// Lower-case name used in CSV files, URLs and JSON documents.
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Temperature => "temperature",
            Modality::Humidity => "humidity",
            Modality::Co2 => "co2",
            Modality::Light => "light",
            Modality::Motion => "motion",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Modality::ALL
            .into_iter()
            .find(|m| m.as_str() == lower)
            .ok_or_else(|| DomainError::UnknownModality(s.to_string()))
    }
}

/// One timestamped measurement from one device in one room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawReading")]
pub struct SensorReading {
    device_id: String,
    room_id: String,
    modality: Modality,
    value: f64,
    timestamp: EpochSecs,
}

#[derive(Deserialize)]
struct RawReading {
    device_id: String,
    room_id: String,
    modality: Modality,
    value: f64,
    timestamp: EpochSecs,
}

impl TryFrom<RawReading> for SensorReading {
    type Error = DomainError;

    fn try_from(raw: RawReading) -> Result<Self, Self::Error> {
        SensorReading::new(raw.device_id, raw.room_id, raw.modality, raw.value, raw.timestamp)
    }
}

impl SensorReading {
    pub fn new(
        device_id: impl Into<String>,
        room_id: impl Into<String>,
        modality: Modality,
        value: f64,
        timestamp: EpochSecs,
    ) -> Result<Self, DomainError> {
        if !value.is_finite() {
            return Err(DomainError::NonFiniteValue(value));
        }
        if timestamp < 0 {
            return Err(DomainError::NegativeTimestamp(timestamp));
        }
        Ok(Self {
            device_id: device_id.into(),
            room_id: room_id.into(),
            modality,
            value,
            timestamp,
        })
    }

    pub fn device_id(&self) -> &str {
        &self.device_id
    }

    pub fn room_id(&self) -> &str {
        &self.room_id
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn timestamp(&self) -> EpochSecs {
        self.timestamp
    }

    /// Same reading with a different value. Fails on non-finite input.
    pub fn with_value(&self, value: f64) -> Result<Self, DomainError> {
        Self::new(self.device_id.clone(), self.room_id.clone(), self.modality, value, self.timestamp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Environmental,
    MotionSwitch,
}

impl DeviceKind {
    pub fn allows(self, modality: Modality) -> bool {
        match self {
            DeviceKind::Environmental => modality != Modality::Motion,
            DeviceKind::MotionSwitch => modality == Modality::Motion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub device_id: String,
    pub kind: DeviceKind,
    pub modalities: BTreeSet<Modality>,
}

impl Device {
    pub fn new(
        device_id: impl Into<String>,
        kind: DeviceKind,
        modalities: impl IntoIterator<Item = Modality>,
    ) -> Result<Self, DomainError> {
        let device = Self {
            device_id: device_id.into(),
            kind,
            modalities: modalities.into_iter().collect(),
        };
        device.validate()?;
        Ok(device)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        for &m in &self.modalities {
            if !self.kind.allows(m) {
                return Err(DomainError::ModalityNotAllowed {
                    device: self.device_id.clone(),
                    kind: self.kind,
                    modality: m,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub room_id: String,
    pub name: String,
    pub device_ids: BTreeSet<String>,
}

/// Rooms plus the devices they host. Enforces unique room ids and that each
/// device belongs to at most one room.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Building {
    rooms: BTreeMap<String, Room>,
    devices: BTreeMap<String, Device>,
}

impl Building {
    pub fn new(rooms: Vec<Room>, devices: Vec<Device>) -> Result<Self, DomainError> {
        let mut device_map = BTreeMap::new();
        for d in devices {
            d.validate()?;
            device_map.insert(d.device_id.clone(), d);
        }
        let mut room_map = BTreeMap::new();
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for room in &rooms {
            for dev in &room.device_ids {
                if !device_map.contains_key(dev) {
                    return Err(DomainError::UnknownDevice {
                        room: room.room_id.clone(),
                        device: dev.clone(),
                    });
                }
                if owner.insert(dev, &room.room_id).is_some() {
                    return Err(DomainError::DeviceInTwoRooms(dev.clone()));
                }
            }
        }
        for room in rooms {
            if room_map.contains_key(&room.room_id) {
                return Err(DomainError::DuplicateRoom(room.room_id));
            }
            room_map.insert(room.room_id.clone(), room);
        }
        Ok(Self { rooms: room_map, devices: device_map })
    }

    /// Rooms ordered by room id.
    pub fn rooms(&self) -> impl Iterator<Item = &Room> {
        self.rooms.values()
    }

    pub fn room(&self, room_id: &str) -> Option<&Room> {
        self.rooms.get(room_id)
    }

    pub fn device(&self, device_id: &str) -> Option<&Device> {
        self.devices.get(device_id)
    }

    pub fn devices(&self) -> impl Iterator<Item = &Device> {
        self.devices.values()
    }

    pub fn room_of(&self, device_id: &str) -> Option<&Room> {
        self.rooms.values().find(|r| r.device_ids.contains(device_id))
    }

    pub fn room_devices<'a>(&'a self, room: &'a Room) -> impl Iterator<Item = &'a Device> + 'a {
        room.device_ids.iter().filter_map(|id| self.devices.get(id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    from: EpochSecs,
    to: EpochSecs,
}

impl TimeWindow {
    pub fn new(from: EpochSecs, to: EpochSecs) -> Result<Self, DomainError> {
        if from > to {
            return Err(DomainError::InvertedWindow { from, to });
        }
        Ok(Self { from, to })
    }

    pub fn from(&self) -> EpochSecs {
        self.from
    }

    pub fn to(&self) -> EpochSecs {
        self.to
    }

    /// Closed interval membership.
    pub fn contains(&self, t: EpochSecs) -> bool {
        self.from <= t && t <= self.to
    }

    pub fn duration(&self) -> i64 {
        self.to - self.from
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityRange {
    pub modality: Modality,
    pub min: f64,
    pub max: f64,
}

impl PlausibilityRange {
    pub fn new(modality: Modality, min: f64, max: f64) -> Result<Self, DomainError> {
        if !(min < max) {
            return Err(DomainError::InvalidRange { modality, min, max });
        }
        Ok(Self { modality, min, max })
    }

    /// Negative values on any non-motion modality are sensor error codes.
    pub fn is_error_sentinel(&self, value: f64) -> bool {
        self.modality != Modality::Motion && value < 0.0
    }

    pub fn accepts(&self, value: f64) -> bool {
        value.is_finite() && value >= self.min && value <= self.max && !self.is_error_sentinel(value)
    }
}

/// Per-modality plausibility ranges. Motion needs no entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlausibilityRules {
    ranges: BTreeMap<Modality, PlausibilityRange>,
}

impl Default for PlausibilityRules {
    /// Indoor defaults.
    fn default() -> Self {
        let ranges = [
            (Modality::Temperature, -10.0, 50.0),
            (Modality::Humidity, 0.0, 100.0),
            (Modality::Co2, 300.0, 5000.0),
            (Modality::Light, 0.0, 100_000.0),
        ]
        .into_iter()
        .map(|(m, lo, hi)| (m, PlausibilityRange { modality: m, min: lo, max: hi }))
        .collect();
        Self { ranges }
    }
}

impl PlausibilityRules {
    pub fn empty() -> Self {
        Self { ranges: BTreeMap::new() }
    }

    pub fn with_range(mut self, range: PlausibilityRange) -> Self {
        self.ranges.insert(range.modality, range);
        self
    }

    pub fn get(&self, modality: Modality) -> Option<&PlausibilityRange> {
        self.ranges.get(&modality)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        for (m, r) in &self.ranges {
            PlausibilityRange::new(*m, r.min, r.max)?;
        }
        Ok(())
    }

    /// Whether a value is physically credible for the modality.
    pub fn check_value(&self, modality: Modality, value: f64) -> Result<bool, DomainError> {
        if modality == Modality::Motion {
            return Ok(value == 0.0 || value == 1.0);
        }
        let range = self.ranges.get(&modality).ok_or(DomainError::MissingRange(modality))?;
        Ok(range.accepts(value))
    }
}

/// Rooms of the demo office, in the order the dashboard lists them.
pub const DEMO_ROOMS: [(&str, &str); 4] = [
    ("rdRoom", "R&D Room"),
    ("wdRoom", "Web Development Room"),
    ("meetingRoom", "Meeting Room"),
    ("kitchenRoom", "Kitchen"),
];

/// The demo office: every room has one environmental sensor
/// (`shellyht-<room>`) and one motion switch (`shelly2-<room>`).
pub fn demo_building() -> Building {
    let mut rooms = Vec::new();
    let mut devices = Vec::new();
    for (id, name) in DEMO_ROOMS {
        let env = format!("shellyht-{id}");
        let motion = format!("shelly2-{id}");
        devices.push(
            Device::new(&env, DeviceKind::Environmental, [Modality::Temperature, Modality::Humidity, Modality::Co2, Modality::Light])
                .expect("environmental modalities"),
        );
        devices.push(Device::new(&motion, DeviceKind::MotionSwitch, [Modality::Motion]).expect("motion modality"));
        rooms.push(Room { room_id: id.into(), name: name.into(), device_ids: [env, motion].into_iter().collect() });
    }
    Building::new(rooms, devices).expect("demo layout is valid")
}

pub fn is_plausible(reading: &SensorReading, rules: &PlausibilityRules) -> Result<bool, DomainError> {
    rules.check_value(reading.modality(), reading.value())
}
