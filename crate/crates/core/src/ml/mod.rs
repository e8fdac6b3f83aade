// SPDX-License-Identifier: Apache-2.0

//! From-scratch learners: isolation forest, dense feed-forward network,
//! random-forest classifier, plus the evaluation metrics and the model
//! document format.

pub mod densenet;
pub mod document;
pub mod iforest;
pub mod metrics;
pub mod rforest;

use thiserror::Error;

pub use densenet::{AdamState, DenseNetModel, MinMax};
pub use document::{ModelDocument, TrainedModel, MODEL_SCHEMA_VERSION};
pub use iforest::{IsolationForestModel, IsolationForestParams, Verdict};
pub use metrics::{ClassificationReport, MetricsReport, RegressionReport};
pub use rforest::{RandomForestModel, RandomForestParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input must be finite")]
    NonFiniteInput,
    #[error("training data is empty")]
    EmptyData,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("training diverged: loss is not finite")]
    NonFiniteLoss,
}
