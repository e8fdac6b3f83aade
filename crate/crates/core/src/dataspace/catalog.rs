// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::policy::UsagePolicy;
use super::DataspaceError;
use crate::domain::EpochSecs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetDescriptor {
    pub asset_id: String,
    pub endpoint: String,
    pub device_type: String,
    pub location: String,
    pub data_modality: String,
    pub protocol: String,
    /// Seconds between samples.
    pub temporal_resolution: u64,
    /// Seconds between publications.
    pub update_frequency: u64,
    pub license: String,
    pub access_policy: UsagePolicy,
}

impl AssetDescriptor {
    pub fn validate(&self) -> Result<(), DataspaceError> {
        if self.asset_id.trim().is_empty() {
            return Err(DataspaceError::InvalidAsset("asset_id is empty".into()));
        }
        if self.temporal_resolution == 0 {
            return Err(DataspaceError::InvalidAsset("temporal_resolution must be > 0".into()));
        }
        url::Url::parse(&self.endpoint)
            .map_err(|e| DataspaceError::InvalidAsset(format!("endpoint `{}`: {e}", self.endpoint)))?;
        Ok(())
    }

    /// Last path segment of the endpoint, which names the provider-side device.
    pub fn endpoint_device(&self) -> Option<String> {
        let url = url::Url::parse(&self.endpoint).ok()?;
        url.path_segments()?.filter(|s| !s.is_empty()).last().map(str::to_string)
    }
}

/// Conjunctive catalog filter; `None` matches everything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CatalogFilter {
    pub modality: Option<String>,
    pub location: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum JournalEntry {
    Register { asset: AssetDescriptor },
    UpdatePolicy { asset_id: String, policy: UsagePolicy },
}

/// Asset catalog. Reads run concurrently, writes are exclusive; with a
/// journal every write is appended before it becomes visible.
pub struct Catalog {
    assets: RwLock<BTreeMap<String, AssetDescriptor>>,
    journal: Option<Mutex<(PathBuf, File)>>,
}

impl std::fmt::Debug for Catalog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Catalog").field("len", &self.len()).finish()
    }
}

impl Catalog {
    pub fn in_memory() -> Self {
        Self { assets: RwLock::new(BTreeMap::new()), journal: None }
    }

    /// Replays the journal at `path` (if present) and appends to it from then on.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, DataspaceError> {
        let path = path.as_ref().to_path_buf();
        let io = |e: std::io::Error| DataspaceError::Journal(format!("{}: {e}", path.display()));
        let mut assets = BTreeMap::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(&path).map_err(io)?).lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: JournalEntry = serde_json::from_str(&line)
                    .map_err(|e| DataspaceError::Journal(format!("{} line {}: {e}", path.display(), i + 1)))?;
                match entry {
                    JournalEntry::Register { asset } => {
                        assets.insert(asset.asset_id.clone(), asset);
                    }
                    JournalEntry::UpdatePolicy { asset_id, policy } => {
                        if let Some(a) = assets.get_mut(&asset_id) {
                            a.access_policy = policy;
                        }
                    }
                }
            }
        } else if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(Self { assets: RwLock::new(assets), journal: Some(Mutex::new((path, file))) })
    }

    fn journal(&self, entry: &JournalEntry) -> Result<(), DataspaceError> {
        if let Some(j) = &self.journal {
            let mut guard = j.lock().expect("catalog journal lock poisoned");
            let (path, file) = &mut *guard;
            let line = serde_json::to_string(entry).expect("journal entries serialize");
            writeln!(file, "{line}")
                .and_then(|()| file.flush())
                .map_err(|e| DataspaceError::Journal(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }

    pub fn register_asset(&self, descriptor: AssetDescriptor, now: EpochSecs) -> Result<String, DataspaceError> {
        descriptor.validate()?;
        descriptor.access_policy.validate_at(now).map_err(DataspaceError::InvalidAsset)?;
        let mut assets = self.assets.write().expect("catalog lock poisoned");
        if assets.contains_key(&descriptor.asset_id) {
            return Err(DataspaceError::DuplicateAsset(descriptor.asset_id));
        }
        self.journal(&JournalEntry::Register { asset: descriptor.clone() })?;
        let id = descriptor.asset_id.clone();
        assets.insert(id.clone(), descriptor);
        Ok(id)
    }

    /// Replaces an asset's policy. Existing agreements keep their snapshot.
    pub fn update_policy(&self, asset_id: &str, policy: UsagePolicy) -> Result<(), DataspaceError> {
        let mut assets = self.assets.write().expect("catalog lock poisoned");
        let asset = assets.get_mut(asset_id).ok_or_else(|| DataspaceError::UnknownAsset(asset_id.to_string()))?;
        self.journal(&JournalEntry::UpdatePolicy { asset_id: asset_id.to_string(), policy: policy.clone() })?;
        asset.access_policy = policy;
        Ok(())
    }

    pub fn get(&self, asset_id: &str) -> Option<AssetDescriptor> {
        self.assets.read().expect("catalog lock poisoned").get(asset_id).cloned()
    }

    /// Assets visible to `participant` that match `filter`, by asset id.
    pub fn query(&self, participant: &str, filter: &CatalogFilter) -> Vec<AssetDescriptor> {
        let eq = |want: &Option<String>, have: &str| want.as_deref().map_or(true, |w| w.eq_ignore_ascii_case(have));
        self.assets
            .read()
            .expect("catalog lock poisoned")
            .values()
            .filter(|a| a.access_policy.allowed_participants.contains(participant))
            .filter(|a| eq(&filter.modality, &a.data_modality) && eq(&filter.location, &a.location))
            .cloned()
            .collect()
    }

    /// Every asset, regardless of visibility (provider-side export).
    pub fn export(&self) -> Vec<AssetDescriptor> {
        self.assets.read().expect("catalog lock poisoned").values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.assets.read().expect("catalog lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn asset(id: &str, modality: &str, allowed: &[&str]) -> AssetDescriptor {
        AssetDescriptor {
            asset_id: id.into(),
            endpoint: format!("http://provider.local/devices/{id}"),
            device_type: "shelly-ht".into(),
            location: "rdRoom".into(),
            data_modality: modality.into(),
            protocol: "mqtt".into(),
            temporal_resolution: 60,
            update_frequency: 60,
            license: "CC-BY-4.0".into(),
            access_policy: UsagePolicy::allow(allowed.iter().copied(), "monitoring"),
        }
    }

    #[test]
    fn register_and_duplicate() {
        let c = Catalog::in_memory();
        assert!(c.query("c", &CatalogFilter::default()).is_empty());
        c.register_asset(asset("a1", "temperature", &["c"]), 0).unwrap();
        assert_eq!(c.len(), 1);
        let err = c.register_asset(asset("a1", "co2", &["c"]), 0).unwrap_err();
        assert!(err.to_string().contains("a1"));
        assert_eq!(c.len(), 1);
        assert_eq!(c.get("a1").unwrap().data_modality, "temperature");
    }

    #[test]
    fn metadata_is_retrievable_verbatim() {
        let c = Catalog::in_memory();
        let a = asset("a1", "temperature", &["c"]);
        c.register_asset(a.clone(), 0).unwrap();
        let got = &c.query("c", &CatalogFilter::default())[0];
        assert_eq!(got, &a);
        assert_eq!((got.temporal_resolution, got.update_frequency), (60, 60));
    }

    #[test]
    fn visibility_and_filters() {
        let c = Catalog::in_memory();
        c.register_asset(asset("t", "temperature", &["c"]), 0).unwrap();
        c.register_asset(asset("k", "CO2", &["c"]), 0).unwrap();
        c.register_asset(asset("hidden", "CO2", &[]), 0).unwrap();
        let co2 = c.query("c", &CatalogFilter { modality: Some("co2".into()), location: None });
        assert_eq!(co2.iter().map(|a| a.asset_id.as_str()).collect::<Vec<_>>(), vec!["k"]);
        assert!(c.query("stranger", &CatalogFilter::default()).is_empty());
        assert_eq!(c.export().len(), 3);
    }

    #[test]
    fn invalid_endpoint_and_resolution_rejected() {
        let c = Catalog::in_memory();
        let mut bad = asset("a", "t", &["c"]);
        bad.endpoint = "not a url".into();
        assert!(c.register_asset(bad, 0).is_err());
        let mut zero = asset("a", "t", &["c"]);
        zero.temporal_resolution = 0;
        assert!(c.register_asset(zero, 0).is_err());
        let expired = AssetDescriptor { access_policy: UsagePolicy::allow(["c"], "m").with_expiry(5), ..asset("a", "t", &[]) };
        assert!(c.register_asset(expired, 10).is_err());
        assert!(c.is_empty());
    }

    #[test]
    fn journal_survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.ndjson");
        {
            let c = Catalog::open(&path).unwrap();
            c.register_asset(asset("a1", "temperature", &["c"]), 0).unwrap();
            c.update_policy("a1", UsagePolicy::allow(["c", "d"], "research")).unwrap();
        }
        let c = Catalog::open(&path).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.get("a1").unwrap().access_policy.purpose, "research");
        assert_eq!(c.query("d", &CatalogFilter::default()).len(), 1);
    }

    #[test]
    fn endpoint_device_is_last_segment() {
        assert_eq!(asset("shelly2-XYZ", "t", &[]).endpoint_device().as_deref(), Some("shelly2-XYZ"));
    }
}
