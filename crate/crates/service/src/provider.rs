// SPDX-License-Identifier: Apache-2.0

//! Provider side of the building: every device is published as one asset
//! whose endpoint ends in the device id.

use std::sync::Arc;

use edgespace_core::dataspace::{AssetDescriptor, Catalog, ProviderConnector, StoreSource, UsagePolicy};
use edgespace_core::store::SeriesStore;
use edgespace_core::{Building, DeviceKind, SensorReading};

use crate::ServiceError;

pub const ENDPOINT_BASE: &str = "http://provider.local/sensors";

pub fn asset_id(device_id: &str) -> String {
    format!("asset-{device_id}")
}

pub fn building_assets(building: &Building, policy: &UsagePolicy, cadence_secs: u64) -> Vec<AssetDescriptor> {
    let mut out = Vec::new();
    for room in building.rooms() {
        for d in building.room_devices(room) {
            out.push(AssetDescriptor {
                asset_id: asset_id(&d.device_id),
                endpoint: format!("{ENDPOINT_BASE}/{}", d.device_id),
                device_type: match d.kind {
                    DeviceKind::Environmental => "environmental".into(),
                    DeviceKind::MotionSwitch => "motion_switch".into(),
                },
                location: room.room_id.clone(),
                data_modality: d.modalities.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(","),
                protocol: "http".into(),
                temporal_resolution: cadence_secs,
                update_frequency: cadence_secs,
                license: "CC-BY-4.0".into(),
                access_policy: policy.clone(),
            });
        }
    }
    out
}

/// A provider connector over its own store holding `readings`, with every
/// device of `building` registered under `policy`.
pub fn publish(
    participant_id: &str,
    building: &Building,
    readings: impl IntoIterator<Item = SensorReading>,
    policy: &UsagePolicy,
    cadence_secs: u64,
    now: i64,
) -> Result<(ProviderConnector, Arc<SeriesStore>), ServiceError> {
    let store = Arc::new(SeriesStore::in_memory(None));
    store.append_all(readings)?;
    let catalog = Catalog::in_memory();
    for a in building_assets(building, policy, cadence_secs) {
        catalog.register_asset(a, now)?;
    }
    let provider = ProviderConnector::new(participant_id, Arc::new(catalog), Arc::new(StoreSource(store.clone())));
    Ok((provider, store))
}
