// SPDX-License-Identifier: Apache-2.0

//! Classification and regression metrics, and their table rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Targets with `|y|` below this are skipped by MAPE.
pub const MAPE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<usize>,
    pub per_class: Vec<ClassMetrics>,
    /// Support-weighted average of the per-class rows; `support` is the total.
    pub weighted: ClassMetrics,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when every target was too close to zero.
    pub mape: Option<f64>,
    pub mape_skipped: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricsReport {
    Classification(ClassificationReport),
    Regression(RegressionReport),
}

impl MetricsReport {
    pub fn to_table(&self, title: &str) -> String {
        match self {
            MetricsReport::Classification(c) => c.to_table(),
            MetricsReport::Regression(r) => r.to_table(title),
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 { 0.0 } else { num as f64 / den as f64 }
}

/// Metrics over the classes present in either sequence, ascending.
pub fn classification_metrics(predictions: &[usize], labels: &[usize]) -> Result<ClassificationReport, ModelError> {
    let mut classes: Vec<usize> = predictions.iter().chain(labels).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let names: Vec<String> = classes.iter().map(|c| c.to_string()).collect();
    classification_metrics_for(predictions, labels, &classes, &names)
}

/// Metrics over an explicit class list with display names (one row per
/// class even when a class never occurs).
pub fn classification_metrics_for(
    predictions: &[usize],
    labels: &[usize],
    classes: &[usize],
    names: &[String],
) -> Result<ClassificationReport, ModelError> {
    if predictions.len() != labels.len() {
        return Err(ModelError::LengthMismatch(predictions.len(), labels.len()));
    }
    if predictions.is_empty() {
        return Err(ModelError::EmptyData);
    }
    if classes.len() != names.len() {
        return Err(ModelError::LengthMismatch(classes.len(), names.len()));
    }
    let total = labels.len();
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    let accuracy = ratio(correct, total);

    let per_class: Vec<ClassMetrics> = classes
        .iter()
        .zip(names)
        .map(|(&c, name)| {
            let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
            for (&p, &l) in predictions.iter().zip(labels) {
                match (p == c, l == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            ClassMetrics {
                label: name.clone(),
                accuracy: ratio(tp + tn, total),
                precision,
                recall,
                f1,
                support: tp + fn_,
            }
        })
        .collect();

    let support: usize = per_class.iter().map(|m| m.support).sum();
    let weigh = |f: fn(&ClassMetrics) -> f64| {
        if support == 0 {
            0.0
        } else {
            per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / support as f64
        }
    };
    let weighted = ClassMetrics {
        label: "Weighted avg".into(),
        accuracy: weigh(|m| m.accuracy),
        precision: weigh(|m| m.precision),
        recall: weigh(|m| m.recall),
        f1: weigh(|m| m.f1),
        support,
    };
    Ok(ClassificationReport { classes: classes.to_vec(), per_class, weighted, accuracy })
}

impl ClassificationReport {
    pub fn class(&self, class: usize) -> Option<&ClassMetrics> {
        self.classes.iter().position(|&c| c == class).map(|i| &self.per_class[i])
    }

    /// Aligned plain-text table: one row per class, then the weighted row.
    pub fn to_table(&self) -> String {
        let rows: Vec<&ClassMetrics> = self.per_class.iter().chain(std::iter::once(&self.weighted)).collect();
        let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>9}  {:>6}  {:>8}  {:>7}",
            "Label", "Accuracy", "Precision", "Recall", "F1-score", "Samples"
        );
        for r in rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8.3}  {:>9.3}  {:>6.3}  {:>8.3}  {:>7}",
                r.label, r.accuracy, r.precision, r.recall, r.f1, r.support
            );
        }
        out
    }
}

pub fn regression_metrics(predictions: &[f64], targets: &[f64]) -> Result<RegressionReport, ModelError> {
    if predictions.len() != targets.len() {
        return Err(ModelError::LengthMismatch(predictions.len(), targets.len()));
    }
    if predictions.is_empty() {
        return Err(ModelError::EmptyData);
    }
    let n = predictions.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut pct = 0.0;
    let mut used = 0usize;
    for (p, y) in predictions.iter().zip(targets) {
        let e = p - y;
        abs += e.abs();
        sq += e * e;
        if y.abs() >= MAPE_EPSILON {
            pct += e.abs() / y.abs();
            used += 1;
        }
    }
    Ok(RegressionReport {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        mape: (used > 0).then(|| pct / used as f64),
        mape_skipped: predictions.len() - used,
        count: predictions.len(),
    })
}

impl RegressionReport {
    pub fn to_table(&self, model: &str) -> String {
        let mape = self.mape.map_or_else(|| "undefined".to_string(), |m| format!("{m:.4}"));
        let width = model.len().max(5);
        format!(
            "{:<width$}  {:>9}  {:>9}  {:>9}\n{:<width$}  {:>9.4}  {:>9.4}  {:>9}\n",
            "Model", "MAE", "RMSE", "MAPE", model, self.mae, self.rmse, mape
        )
    }
}
