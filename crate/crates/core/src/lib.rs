// SPDX-License-Identifier: Apache-2.0

//! Smart-building platform core: sensor vocabulary, dataset ingestion, the
//! three learners and their training pipelines, the dataspace connector
//! state machines, cloud–edge placement, and the time-series store.

pub mod dataspace;
pub mod domain;
pub mod ingest;
pub mod ml;
pub mod orchestrator;
pub mod pipeline;
pub mod seed;
pub mod store;

pub use domain::{
    demo_building, is_plausible, Building, Device, DeviceKind, DomainError, EpochSecs, Modality, PlausibilityRange,
    PlausibilityRules, Room, SensorReading, TimeWindow, DEMO_ROOMS,
};
