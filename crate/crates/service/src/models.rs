// SPDX-License-Identifier: Apache-2.0

//! The set of models the service answers with, and its on-disk layout:
//!
//! ```text
//! <dir>/presence.json              random forest
//! <dir>/anomaly-<modality>.json    isolation forest, one feature
//! <dir>/forecast-<modality>.json   univariate dense net
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use edgespace_core::ml::document::DocumentError;
use edgespace_core::ml::{DenseNetModel, IsolationForestModel, ModelDocument, RandomForestModel, TrainedModel};
use edgespace_core::Modality;
use thiserror::Error;

pub const PRESENCE_FILE: &str = "presence.json";

pub fn anomaly_file(m: Modality) -> String {
    format!("anomaly-{m}.json")
}

pub fn forecast_file(m: Modality) -> String {
    format!("forecast-{m}.json")
}

#[derive(Debug, Error)]
pub enum ModelSetError {
    #[error("{path}: {source}")]
    Document {
        path: PathBuf,
        #[source]
        source: DocumentError,
    },
    #[error("{path}: expected a {expected} model, found {found}")]
    WrongKind { path: PathBuf, expected: &'static str, found: &'static str },
    #[error("{path}: {reason}")]
    Shape { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelSet {
    pub presence: Option<RandomForestModel>,
    pub anomaly: BTreeMap<Modality, IsolationForestModel>,
    pub forecast: BTreeMap<Modality, DenseNetModel>,
}

fn read(path: &Path) -> Result<Option<TrainedModel>, ModelSetError> {
    if !path.exists() {
        return Ok(None);
    }
    ModelDocument::load(path).map(|d| Some(d.model)).map_err(|source| ModelSetError::Document { path: path.into(), source })
}

impl ModelSet {
    /// Loads whatever model files are present; missing files leave gaps.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, ModelSetError> {
        let dir = dir.as_ref();
        let mut set = ModelSet::default();
        let path = dir.join(PRESENCE_FILE);
        match read(&path)? {
            None => {}
            Some(TrainedModel::RandomForest(m)) => set.presence = Some(m),
            Some(other) => return Err(ModelSetError::WrongKind { path, expected: "random_forest", found: other.kind() }),
        }
        for m in Modality::ALL {
            let path = dir.join(anomaly_file(m));
            match read(&path)? {
                None => {}
                Some(TrainedModel::IsolationForest(f)) if f.feature_count == 1 => {
                    set.anomaly.insert(m, f);
                }
                Some(TrainedModel::IsolationForest(f)) => {
                    return Err(ModelSetError::Shape { path, reason: format!("expected 1 feature, found {}", f.feature_count) })
                }
                Some(other) => return Err(ModelSetError::WrongKind { path, expected: "isolation_forest", found: other.kind() }),
            }
            let path = dir.join(forecast_file(m));
            match read(&path)? {
                None => {}
                Some(TrainedModel::DenseNet(n)) if n.n_series() == 1 => {
                    set.forecast.insert(m, n);
                }
                Some(TrainedModel::DenseNet(n)) => {
                    return Err(ModelSetError::Shape { path, reason: format!("expected a univariate model, found {} series", n.n_series()) })
                }
                Some(other) => return Err(ModelSetError::WrongKind { path, expected: "dense_net", found: other.kind() }),
            }
        }
        Ok(set)
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<(), ModelSetError> {
        let dir = dir.as_ref();
        let save = |name: String, model: TrainedModel| {
            let path = dir.join(name);
            ModelDocument::from(model).save(&path).map_err(|source| ModelSetError::Document { path, source })
        };
        if let Some(p) = &self.presence {
            save(PRESENCE_FILE.into(), TrainedModel::RandomForest(p.clone()))?;
        }
        for (m, f) in &self.anomaly {
            save(anomaly_file(*m), TrainedModel::IsolationForest(f.clone()))?;
        }
        for (m, n) in &self.forecast {
            save(forecast_file(*m), TrainedModel::DenseNet(n.clone()))?;
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.presence.is_none() && self.anomaly.is_empty() && self.forecast.is_empty()
    }
}
