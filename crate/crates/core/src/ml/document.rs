// SPDX-License-Identifier: Apache-2.0

//! Self-describing model documents.
//!
//! ```json
//! { "schema_version": 1, "model_kind": "random_forest", "hyperparameters": {..}, "parameters": {..} }
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::densenet::{DenseLayer, MinMax};
use super::iforest::{IsolationForestParams, IsolationTree};
use super::rforest::{ClassificationTree, RandomForestParams, Standardizer};
use super::{DenseNetModel, IsolationForestModel, ModelError, RandomForestModel};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema_version {0}")]
    Version(u32),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    IsolationForest(IsolationForestModel),
    DenseNet(DenseNetModel),
    RandomForest(RandomForestModel),
}

impl TrainedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            TrainedModel::IsolationForest(_) => "isolation_forest",
            TrainedModel::DenseNet(_) => "dense_net",
            TrainedModel::RandomForest(_) => "random_forest",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct IForestHyper {
    #[serde(flatten)]
    params: IsolationForestParams,
    feature_count: usize,
    subsample_size: usize,
}

#[derive(Serialize, Deserialize)]
struct IForestParams {
    score_threshold: f64,
    trees: Vec<IsolationTree>,
}

#[derive(Serialize, Deserialize)]
struct DenseHyper {
    window_len: usize,
    layer_widths: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct DenseParams {
    series_scaling: Vec<MinMax>,
    layers: Vec<DenseLayer>,
}

#[derive(Serialize, Deserialize)]
struct ForestHyper {
    #[serde(flatten)]
    params: RandomForestParams,
    feature_count: usize,
    class_labels: [u8; 2],
}

#[derive(Serialize, Deserialize)]
struct ForestParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaling: Option<Standardizer>,
    trees: Vec<ClassificationTree>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "model_kind", rename_all = "snake_case")]
enum Body {
    IsolationForest { hyperparameters: IForestHyper, parameters: IForestParams },
    DenseNet { hyperparameters: DenseHyper, parameters: DenseParams },
    RandomForest { hyperparameters: ForestHyper, parameters: ForestParams },
}

#[derive(Serialize, Deserialize)]
struct Wire {
    schema_version: u32,
    #[serde(flatten)]
    body: Body,
}

/// A trained model as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDocument {
    pub model: TrainedModel,
}

impl From<TrainedModel> for ModelDocument {
    fn from(model: TrainedModel) -> Self {
        Self { model }
    }
}

impl ModelDocument {
    pub fn to_json(&self) -> Result<String, DocumentError> {
        let body = match &self.model {
            TrainedModel::IsolationForest(m) => Body::IsolationForest {
                hyperparameters: IForestHyper {
                    params: m.params,
                    feature_count: m.feature_count,
                    subsample_size: m.subsample_size,
                },
                parameters: IForestParams { score_threshold: m.score_threshold, trees: m.trees.clone() },
            },
            TrainedModel::DenseNet(m) => Body::DenseNet {
                hyperparameters: DenseHyper {
                    window_len: m.window_len,
                    layer_widths: std::iter::once(m.input_dim()).chain(m.layers.iter().map(|l| l.outputs())).collect(),
                },
                parameters: DenseParams { series_scaling: m.series_scaling.clone(), layers: m.layers.clone() },
            },
            TrainedModel::RandomForest(m) => Body::RandomForest {
                hyperparameters: ForestHyper {
                    params: m.params,
                    feature_count: m.feature_count,
                    class_labels: m.class_labels,
                },
                parameters: ForestParams { scaling: m.scaling.clone(), trees: m.trees.clone() },
            },
        };
        Ok(serde_json::to_string_pretty(&Wire { schema_version: MODEL_SCHEMA_VERSION, body })?)
    }

    pub fn from_json(text: &str) -> Result<Self, DocumentError> {
        let wire: Wire = serde_json::from_str(text)?;
        if wire.schema_version != MODEL_SCHEMA_VERSION {
            return Err(DocumentError::Version(wire.schema_version));
        }
        let model = match wire.body {
            Body::IsolationForest { hyperparameters: h, parameters: p } => {
                h.params.validate()?;
                TrainedModel::IsolationForest(IsolationForestModel::from_trees(
                    p.trees,
                    h.feature_count,
                    h.subsample_size,
                    h.params,
                    p.score_threshold,
                ))
            }
            Body::DenseNet { hyperparameters: h, parameters: p } => {
                let m = DenseNetModel::from_layers(h.window_len, p.series_scaling, p.layers)?;
                let widths: Vec<usize> = std::iter::once(m.input_dim()).chain(m.layers.iter().map(|l| l.outputs())).collect();
                if widths != h.layer_widths {
                    return Err(ModelError::InvalidParameter("layer_widths disagree with layer shapes".into()).into());
                }
                TrainedModel::DenseNet(m)
            }
            Body::RandomForest { hyperparameters: h, parameters: p } => {
                h.params.validate()?;
                let mut m = RandomForestModel::from_trees(p.trees, h.feature_count, h.params);
                m.class_labels = h.class_labels;
                m.scaling = p.scaling;
                TrainedModel::RandomForest(m)
            }
        };
        Ok(Self { model })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DocumentError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|source| DocumentError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DocumentError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DocumentError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }
}
