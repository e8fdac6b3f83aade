// SPDX-License-Identifier: Apache-2.0

//! `evaluate --model FILE --data D`: scores a saved model on a dataset of the
//! matching kind. A presence model reads an occupancy table, the other two
//! read normalized readings.

use std::io::Write;
use std::path::{Path, PathBuf};

use edgespace_core::ingest::load_occupancy_csv;
use edgespace_core::ml::{MetricsReport, ModelDocument, TrainedModel};
use edgespace_core::pipeline::{anomaly_rows, evaluate_anomaly, evaluate_forecaster, evaluate_on_stream, make_windows, preprocess, PresenceObservation};
use edgespace_core::Modality;
use serde::Serialize;

use crate::data::{ingest_err, resolve, ANOMALIES_FILE, OCCUPANCY_FILE};
use crate::train::{load_readings, load_truth, pipeline_err};
use crate::{write_json, CliError, Format, RunConfig};

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    /// Modality of a per-modality model; taken from the file name when absent.
    pub modality: Option<Modality>,
    pub format: Format,
}

#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub model_kind: &'static str,
    pub modality: Option<Modality>,
    pub samples: usize,
    pub metrics: MetricsReport,
}

/// `anomaly-co2.json` -> co2.
fn modality_from_name(path: &Path) -> Option<Modality> {
    let stem = path.file_stem()?.to_str()?;
    let (_, m) = stem.split_once('-')?;
    m.parse().ok()
}

pub fn evaluate(cfg: &RunConfig, args: &EvaluateArgs, out: &mut dyn Write) -> Result<Evaluation, CliError> {
    let doc = ModelDocument::load(&args.model).map_err(|e| CliError::Config(format!("{}: {e}", args.model.display())))?;
    let modality = args.modality.or_else(|| modality_from_name(&args.model));
    let kind = doc.model.kind();
    let eval = match doc.model {
        TrainedModel::RandomForest(model) => {
            let records = load_occupancy_csv(resolve(&args.data, OCCUPANCY_FILE)).map_err(ingest_err)?;
            let stream: Vec<PresenceObservation> = records.iter().map(PresenceObservation::from).collect();
            let report = evaluate_on_stream(&model, &stream).map_err(pipeline_err)?;
            Evaluation { model_kind: kind, modality: None, samples: stream.len(), metrics: MetricsReport::Classification(report) }
        }
        TrainedModel::IsolationForest(model) => {
            let m = modality.ok_or_else(|| CliError::Config("anomaly model: pass --modality".into()))?;
            let readings = load_readings(&args.data)?;
            let labels = load_truth(&args.data, &readings)?
                .ok_or_else(|| CliError::Config(format!("anomaly evaluation needs {ANOMALIES_FILE} beside the data")))?;
            let (rows, lbl) = anomaly_rows(&readings, &labels, m);
            if rows.is_empty() {
                return Err(CliError::Config(format!("no {m} readings in the data")));
            }
            let report = evaluate_anomaly(&model, &rows, &lbl).map_err(pipeline_err)?;
            Evaluation { model_kind: kind, modality: Some(m), samples: rows.len(), metrics: MetricsReport::Classification(report) }
        }
        TrainedModel::DenseNet(model) => {
            let m = modality.ok_or_else(|| CliError::Config("forecast model: pass --modality".into()))?;
            if model.n_series() != 1 {
                return Err(CliError::Config(format!("expected a univariate forecaster, model has {} series", model.n_series())));
            }
            let readings: Vec<_> = load_readings(&args.data)?.into_iter().filter(|r| r.modality() == m).collect();
            if readings.is_empty() {
                return Err(CliError::Config(format!("no {m} readings in the data")));
            }
            let table = preprocess(&readings, &cfg.simulation.profile.plausibility, None).map_err(pipeline_err)?;
            let scaling = model.series_scaling[0];
            let series: Vec<f64> = table.values[0].iter().map(|&v| scaling.normalize(v)).collect();
            let samples = make_windows(&series, model.window_len);
            if samples.is_empty() {
                return Err(CliError::Domain(format!("{} points are too few for windows of {}", series.len(), model.window_len)));
            }
            let report = evaluate_forecaster(&model, &samples, true).map_err(pipeline_err)?;
            Evaluation { model_kind: kind, modality: Some(m), samples: samples.len(), metrics: MetricsReport::Regression(report) }
        }
    };
    match args.format {
        Format::Doc => write_json(out, &eval)?,
        Format::Table => {
            let title = match eval.modality {
                Some(m) => format!("{kind}[{m}]"),
                None => kind.to_string(),
            };
            writeln!(out, "{title} on {} samples", eval.samples)?;
            write!(out, "{}", eval.metrics.to_table(&title))?;
        }
    }
    Ok(eval)
}
