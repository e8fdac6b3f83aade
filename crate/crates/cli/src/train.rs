// SPDX-License-Identifier: Apache-2.0

//! `train --task anomaly|forecast|presence`. Models land in the output
//! directory under the file names the service loads; the training runs go to
//! `<task>-report.json` next to them.

use std::io::Write;
use std::path::{Path, PathBuf};

use edgespace_core::ingest::{load_normalized_csv, load_occupancy_csv};
use edgespace_core::ml::densenet::{Sample, DEFAULT_WINDOW};
use edgespace_core::ml::{DenseNetModel, IsolationForestModel, ModelDocument, RandomForestModel, TrainedModel};
use edgespace_core::pipeline::{
    anomaly_rows, chrono_split, evaluate_forecaster, grid_search_anomaly, make_windows, naive_last_value_mae, preprocess,
    train_forecaster, train_presence, ForecastConfig, PipelineError, PresenceOptions, TrainingRun, DEFAULT_TRAIN_FRACTION,
};
use edgespace_core::{seed, Modality, SensorReading};
use edgespace_service::models::{anomaly_file, forecast_file, PRESENCE_FILE};
use serde::Serialize;

use crate::data::{ingest_err, labels_for, read_labels, resolve, ANOMALIES_FILE, OCCUPANCY_FILE, READINGS_FILE};
use crate::{ensure_dir, write_json, CliError, Format, RunConfig};

/// Modalities that get an anomaly detector and a forecaster.
pub const CLIMATE: [Modality; 4] = [Modality::Temperature, Modality::Humidity, Modality::Co2, Modality::Light];

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Task {
    Anomaly,
    Forecast,
    Presence,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Anomaly => "anomaly",
            Task::Forecast => "forecast",
            Task::Presence => "presence",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub task: Task,
    pub data: PathBuf,
    pub out: PathBuf,
    /// Forecast target; temperature when absent.
    pub modality: Option<Modality>,
    /// Restricts forecast training to one device.
    pub device: Option<String>,
    pub format: Format,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainedEntry {
    pub file: String,
    pub modality: Option<Modality>,
    pub run: TrainingRun,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub task: &'static str,
    pub models: Vec<TrainedEntry>,
}

pub(crate) fn pipeline_err(e: PipelineError) -> CliError {
    CliError::Domain(e.to_string())
}

pub(crate) fn load_readings(data: &Path) -> Result<Vec<SensorReading>, CliError> {
    let path = resolve(data, READINGS_FILE);
    let load = load_normalized_csv(&path).map_err(ingest_err)?;
    if !load.rejections.is_empty() {
        log::warn!("{}: skipped {} malformed rows", path.display(), load.rejections.len());
    }
    if load.readings.is_empty() {
        return Err(CliError::Config(format!("{} holds no readings", path.display())));
    }
    Ok(load.readings)
}

/// Ground truth for `readings`; all-normal when no label file sits beside the data.
pub(crate) fn load_truth(data: &Path, readings: &[SensorReading]) -> Result<Option<Vec<bool>>, CliError> {
    let dir = if data.is_dir() { data.to_path_buf() } else { data.parent().map(Path::to_path_buf).unwrap_or_default() };
    let path = dir.join(ANOMALIES_FILE);
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(labels_for(readings, &read_labels(&path)?)))
}

fn save(dir: &Path, file: &str, model: TrainedModel) -> Result<(), CliError> {
    ModelDocument::from(model).save(dir.join(file)).map_err(|e| CliError::Domain(e.to_string()))
}

pub fn train(cfg: &RunConfig, args: &TrainArgs, out: &mut dyn Write) -> Result<TrainReport, CliError> {
    let report = match args.task {
        Task::Anomaly => train_anomaly(cfg, &args.data, &args.out, args.format, out)?,
        Task::Forecast => {
            let m = args.modality.unwrap_or(Modality::Temperature);
            train_forecast(cfg, &args.data, &args.out, m, args.device.as_deref(), args.format, out)?
        }
        Task::Presence => train_presence_cmd(cfg, &args.data, &args.out, args.format, out)?,
    };
    let path = args.out.join(format!("{}-report.json", report.task));
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Domain(e.to_string()))?;
    std::fs::write(&path, text)?;
    if args.format == Format::Doc {
        write_json(out, &report)?;
    } else {
        writeln!(out, "report -> {}", path.display())?;
    }
    Ok(report)
}

/// Fits one detector per climate modality present in the data.
pub fn anomaly_models(
    cfg: &RunConfig,
    readings: &[SensorReading],
    labels: &[bool],
) -> Result<Vec<(Modality, IsolationForestModel, TrainingRun)>, CliError> {
    let mut models = Vec::new();
    for m in CLIMATE {
        let (rows, lbl) = anomaly_rows(readings, labels, m);
        if rows.is_empty() {
            continue;
        }
        let (model, run) = grid_search_anomaly(&rows, &lbl, &cfg.grids.anomaly, seed::derive(cfg.rng_seed, &format!("anomaly-{m}")))
            .map_err(pipeline_err)?;
        models.push((m, model, run));
    }
    if models.is_empty() {
        return Err(CliError::Config("no climate readings to train an anomaly detector on".into()));
    }
    Ok(models)
}

fn train_anomaly(cfg: &RunConfig, data: &Path, dir: &Path, format: Format, out: &mut dyn Write) -> Result<TrainReport, CliError> {
    let readings = load_readings(data)?;
    let labels = match load_truth(data, &readings)? {
        Some(l) => l,
        None => {
            log::warn!("no {ANOMALIES_FILE} beside the data; selecting by accuracy against all-normal labels");
            vec![false; readings.len()]
        }
    };
    let models = anomaly_models(cfg, &readings, &labels)?;
    ensure_dir(dir)?;
    let mut entries = Vec::new();
    for (m, model, run) in models {
        let file = anomaly_file(m);
        save(dir, &file, TrainedModel::IsolationForest(model))?;
        if format == Format::Table {
            writeln!(out, "anomaly detector [{m}] {} -> {file}", run.grid_point)?;
            write!(out, "{}", run.metrics.to_table(&format!("IsolationForest[{m}]")))?;
        }
        entries.push(TrainedEntry { file, modality: Some(m), run });
    }
    Ok(TrainReport { task: Task::Anomaly.as_str(), models: entries })
}

/// Windows of one modality's normalized, grid-aligned series.
pub struct ForecastData {
    pub samples: Vec<Sample>,
    pub scaling: edgespace_core::ml::MinMax,
    pub cadence_secs: i64,
}

pub fn forecast_data(cfg: &RunConfig, readings: &[SensorReading], m: Modality, device: Option<&str>) -> Result<ForecastData, CliError> {
    let picked: Vec<SensorReading> =
        readings.iter().filter(|r| r.modality() == m && device.is_none_or(|d| r.device_id() == d)).cloned().collect();
    if picked.is_empty() {
        let scope = device.map(|d| format!(" of device `{d}`")).unwrap_or_default();
        return Err(CliError::Config(format!("no {m} readings{scope} in the data")));
    }
    let table = preprocess(&picked, &cfg.simulation.profile.plausibility, None).map_err(pipeline_err)?;
    let col = table.modalities.iter().position(|&x| x == m).ok_or_else(|| CliError::Domain(format!("{m} is unusable")))?;
    Ok(ForecastData {
        samples: make_windows(&table.normalized[col], DEFAULT_WINDOW),
        scaling: table.scaling[col],
        cadence_secs: table.cadence_secs,
    })
}

pub fn forecast_model(cfg: &RunConfig, fd: &ForecastData, label: &str) -> Result<(DenseNetModel, TrainingRun), CliError> {
    let (train, _) = chrono_split(&fd.samples, DEFAULT_TRAIN_FRACTION);
    let fc = ForecastConfig { epochs: cfg.grids.epochs, batch_size: cfg.grids.batch_size };
    train_forecaster(train, &[fd.scaling], &cfg.grids.forecast, fc, seed::derive(cfg.rng_seed, label)).map_err(pipeline_err)
}

fn train_forecast(
    cfg: &RunConfig,
    data: &Path,
    dir: &Path,
    m: Modality,
    device: Option<&str>,
    format: Format,
    out: &mut dyn Write,
) -> Result<TrainReport, CliError> {
    let readings = load_readings(data)?;
    let fd = forecast_data(cfg, &readings, m, device)?;
    let (model, mut run) = forecast_model(cfg, &fd, &format!("forecast-{m}"))?;
    let (_, test) = chrono_split(&fd.samples, DEFAULT_TRAIN_FRACTION);
    if format == Format::Table {
        writeln!(out, "forecaster [{m}] {} at {} s cadence, {} windows", run.grid_point, fd.cadence_secs, fd.samples.len())?;
        writeln!(out, "{:>5}  {:>9}", "Epoch", "Val MAE")?;
        for (e, mae) in run.val_mae_history.iter().enumerate() {
            let mark = if Some(e) == run.best_epoch { "  *" } else { "" };
            writeln!(out, "{:>5}  {:>9.5}{mark}", e + 1, mae)?;
        }
    }
    if !test.is_empty() {
        let report = evaluate_forecaster(&model, test, true).map_err(pipeline_err)?;
        if format == Format::Table {
            writeln!(out, "held-out test ({} windows), {}", test.len(), m.unit())?;
            write!(out, "{}", report.to_table("DenseNet"))?;
            let span = fd.scaling.max - fd.scaling.min;
            writeln!(out, "naive last-value MAE: {:.4} {}", naive_last_value_mae(test) * span, m.unit())?;
        }
        run.warnings.push(format!("held-out MAE {:.5} {}", report.mae, m.unit()));
    }
    ensure_dir(dir)?;
    let file = forecast_file(m);
    save(dir, &file, TrainedModel::DenseNet(model))?;
    if format == Format::Table {
        writeln!(out, "-> {file}")?;
    }
    Ok(TrainReport { task: Task::Forecast.as_str(), models: vec![TrainedEntry { file, modality: Some(m), run }] })
}

pub fn presence_model(cfg: &RunConfig, records: &[edgespace_core::ingest::OccupancyRecord]) -> Result<(RandomForestModel, TrainingRun), CliError> {
    train_presence(records, &cfg.grids.presence, PresenceOptions { rebalance: cfg.grids.rebalance }, seed::derive(cfg.rng_seed, "presence"))
        .map_err(pipeline_err)
}

fn train_presence_cmd(cfg: &RunConfig, data: &Path, dir: &Path, format: Format, out: &mut dyn Write) -> Result<TrainReport, CliError> {
    let records = load_occupancy_csv(resolve(data, OCCUPANCY_FILE)).map_err(ingest_err)?;
    let (model, run) = presence_model(cfg, &records)?;
    ensure_dir(dir)?;
    save(dir, PRESENCE_FILE, TrainedModel::RandomForest(model))?;
    if format == Format::Table {
        writeln!(out, "presence classifier {} on {} rows (test split)", run.grid_point, records.len())?;
        write!(out, "{}", run.metrics.to_table("RandomForest"))?;
        writeln!(out, "-> {PRESENCE_FILE}")?;
    }
    Ok(TrainReport { task: Task::Presence.as_str(), models: vec![TrainedEntry { file: PRESENCE_FILE.into(), modality: None, run }] })
}
