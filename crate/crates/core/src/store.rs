// SPDX-License-Identifier: Apache-2.0

//! Per-(device, modality) time-series store with an append-only NDJSON log.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use thiserror::Error;

use crate::domain::{EpochSecs, Modality, SensorReading, TimeWindow};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store log {path} line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error("reading at {timestamp} is older than the retention horizon {oldest_allowed}")]
    TooOld { timestamp: EpochSecs, oldest_allowed: EpochSecs },
}

type Key = (String, Modality);

#[derive(Default)]
struct Index {
    series: BTreeMap<Key, Vec<SensorReading>>,
    newest: Option<EpochSecs>,
    len: usize,
}

impl Index {
    fn insert(&mut self, r: SensorReading) {
        let t = r.timestamp();
        let log = self.series.entry((r.device_id().to_string(), r.modality())).or_default();
        // after any equal timestamps, so duplicates keep arrival order
        let at = log.partition_point(|x| x.timestamp() <= t);
        log.insert(at, r);
        self.newest = Some(self.newest.map_or(t, |n| n.max(t)));
        self.len += 1;
    }
}

/// Readings indexed by (device, modality), kept sorted by timestamp.
///
/// `retention_secs` is measured back from the newest stored timestamp, so
/// replayed historical data behaves the same as live data.
pub struct SeriesStore {
    index: RwLock<Index>,
    log: Option<Mutex<(PathBuf, BufWriter<File>)>>,
    retention_secs: Option<i64>,
}

impl std::fmt::Debug for SeriesStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SeriesStore").field("len", &self.len()).field("retention_secs", &self.retention_secs).finish()
    }
}

impl SeriesStore {
    pub fn in_memory(retention_secs: Option<i64>) -> Self {
        Self { index: RwLock::new(Index::default()), log: None, retention_secs }
    }

    /// Opens (or creates) a log file and replays it into memory.
    pub fn open(path: impl AsRef<Path>, retention_secs: Option<i64>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| StoreError::Io { path: path.clone(), source };
        let mut index = Index::default();
        if path.exists() {
            let file = File::open(&path).map_err(io)?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let r: SensorReading = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    path: path.clone(),
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                index.insert(r);
            }
        } else if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        log::debug!("store {}: replayed {} readings", path.display(), index.len);
        Ok(Self {
            index: RwLock::new(index),
            log: Some(Mutex::new((path, BufWriter::new(file)))),
            retention_secs,
        })
    }

    /// Stores one reading; returns once it is written to the log.
    pub fn append(&self, reading: SensorReading) -> Result<(), StoreError> {
        if let (Some(ret), Some(newest)) = (self.retention_secs, self.newest()) {
            let oldest_allowed = newest - ret;
            if reading.timestamp() < oldest_allowed {
                return Err(StoreError::TooOld { timestamp: reading.timestamp(), oldest_allowed });
            }
        }
        if let Some(log) = &self.log {
            let mut guard = log.lock().expect("store log lock poisoned");
            let (path, w) = &mut *guard;
            let line = serde_json::to_string(&reading).expect("readings always serialize");
            writeln!(w, "{line}")
                .and_then(|()| w.flush())
                .map_err(|source| StoreError::Io { path: path.clone(), source })?;
        }
        self.index.write().expect("store index lock poisoned").insert(reading);
        Ok(())
    }

    pub fn append_all(&self, readings: impl IntoIterator<Item = SensorReading>) -> Result<usize, StoreError> {
        let mut n = 0;
        for r in readings {
            self.append(r)?;
            n += 1;
        }
        Ok(n)
    }

    /// Readings with `from <= t <= to`, ascending.
    pub fn query(&self, device_id: &str, modality: Modality, window: TimeWindow) -> Vec<SensorReading> {
        let idx = self.index.read().expect("store index lock poisoned");
        let Some(log) = idx.series.get(&(device_id.to_string(), modality)) else {
            return Vec::new();
        };
        let lo = log.partition_point(|r| r.timestamp() < window.from());
        let hi = log.partition_point(|r| r.timestamp() <= window.to());
        log[lo..hi.max(lo)].to_vec()
    }

    /// The `n` most recent readings, ascending.
    pub fn latest(&self, device_id: &str, modality: Modality, n: usize) -> Vec<SensorReading> {
        let idx = self.index.read().expect("store index lock poisoned");
        idx.series
            .get(&(device_id.to_string(), modality))
            .map(|log| log[log.len().saturating_sub(n)..].to_vec())
            .unwrap_or_default()
    }

    pub fn keys(&self) -> Vec<(String, Modality)> {
        self.index.read().expect("store index lock poisoned").series.keys().cloned().collect()
    }

    pub fn newest(&self) -> Option<EpochSecs> {
        self.index.read().expect("store index lock poisoned").newest
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("store index lock poisoned").len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flush(&self) -> Result<(), StoreError> {
        if let Some(log) = &self.log {
            let mut guard = log.lock().expect("store log lock poisoned");
            let (path, w) = &mut *guard;
            w.flush().map_err(|source| StoreError::Io { path: path.clone(), source })?;
        }
        Ok(())
    }
}
