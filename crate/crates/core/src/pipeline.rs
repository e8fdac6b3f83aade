// SPDX-License-Identifier: Apache-2.0

//! Training recipes: cleaning and alignment, windowing, chronological splits,
//! grid searches with checkpointing, and evaluation reports.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{DomainError, EpochSecs, Modality, PlausibilityRules, SensorReading};
use crate::ingest::OccupancyRecord;
use crate::ml::densenet::{MinMax, Sample, DEFAULT_WINDOW};
use crate::ml::metrics::{classification_metrics_for, regression_metrics, ClassificationReport, RegressionReport};
use crate::ml::{
    AdamState, DenseNetModel, IsolationForestModel, IsolationForestParams, MetricsReport, ModelError,
    RandomForestModel, RandomForestParams, Verdict,
};
use crate::seed;

/// Fewest distinct points a modality needs to yield at least one window.
pub const MIN_USABLE_POINTS: usize = DEFAULT_WINDOW + 1;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
pub const VALIDATION_FRACTION: f64 = 0.1;
pub const DEFAULT_EPOCHS: usize = 50;
pub const DEFAULT_BATCH_SIZE: usize = 32;

pub const PRESENCE_CLASS_NAMES: [&str; 2] = ["Unoccupied", "Occupied"];
pub const ANOMALY_CLASS_NAMES: [&str; 2] = ["Normal", "Anomaly"];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no input data")]
    Empty,
    #[error("no modality has at least {MIN_USABLE_POINTS} plausible points (unusable: {0:?})")]
    NoUsableModality(Vec<Modality>),
    #[error("aligned grid has {ticks} ticks at a {cadence_secs} s cadence; at least {min} are needed", min = MIN_USABLE_POINTS)]
    ShortGrid { ticks: usize, cadence_secs: i64 },
    #[error("grid `{0}` has no candidate values")]
    EmptyGrid(&'static str),
    #[error("training data holds a single class; cannot train a classifier")]
    SingleClass,
    #[error("stream sample {0} has no ground-truth label")]
    UnlabeledStream(usize),
    #[error("every grid point was disqualified")]
    AllDisqualified,
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Cleaned, grid-aligned, min-max normalized table, one column per modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub modalities: Vec<Modality>,
    pub cadence_secs: i64,
    pub timestamps: Vec<EpochSecs>,
    /// Aligned physical values, `values[m][t]`.
    pub values: Vec<Vec<f64>>,
    /// Normalized values in [0, 1], same layout as `values`.
    pub normalized: Vec<Vec<f64>>,
    pub scaling: Vec<MinMax>,
    /// Readings dropped by the plausibility rules.
    pub removed: usize,
    /// Modalities with too few surviving points to window.
    pub unusable: Vec<Modality>,
}

impl FeatureTable {
    pub fn column(&self, m: Modality) -> Option<usize> {
        self.modalities.iter().position(|&x| x == m)
    }

    /// The aligned table back as readings (physical units, one pseudo-device).
    pub fn to_readings(&self, device_id: &str, room_id: &str) -> Result<Vec<SensorReading>, DomainError> {
        let mut out = Vec::new();
        for (ti, &t) in self.timestamps.iter().enumerate() {
            for (mi, &m) in self.modalities.iter().enumerate() {
                out.push(SensorReading::new(device_id, room_id, m, self.values[mi][ti], t)?);
            }
        }
        Ok(out)
    }
}

fn median(v: &mut [i64]) -> i64 {
    v.sort_unstable();
    v[v.len() / 2]
}

/// Drops implausible readings, resamples every modality onto a common grid by
/// carrying the last observation forward, and min-max normalizes the result.
///
/// The grid starts at the latest first-observation among usable modalities
/// (so every column has a value from the first tick) and ends at the latest
/// observation. `cadence_secs` defaults to the coarsest per-modality median
/// sampling interval.
pub fn preprocess(
    readings: &[SensorReading],
    rules: &PlausibilityRules,
    cadence_secs: Option<i64>,
) -> Result<FeatureTable, PipelineError> {
    if readings.is_empty() {
        return Err(PipelineError::Empty);
    }
    let mut removed = 0;
    // modality -> timestamp -> (sum, count); several devices average out
    let mut series: BTreeMap<Modality, BTreeMap<EpochSecs, (f64, u32)>> = BTreeMap::new();
    for r in readings {
        if !crate::domain::is_plausible(r, rules)? {
            removed += 1;
            continue;
        }
        let e = series.entry(r.modality()).or_default().entry(r.timestamp()).or_insert((0.0, 0));
        e.0 += r.value();
        e.1 += 1;
    }

    let mut unusable = Vec::new();
    let mut usable: Vec<(Modality, Vec<(EpochSecs, f64)>)> = Vec::new();
    for (m, points) in series {
        if points.len() < MIN_USABLE_POINTS {
            unusable.push(m);
        } else {
            usable.push((m, points.into_iter().map(|(t, (s, n))| (t, s / f64::from(n))).collect()));
        }
    }
    if usable.is_empty() {
        return Err(PipelineError::NoUsableModality(unusable));
    }

    let cadence = match cadence_secs {
        Some(c) if c > 0 => c,
        Some(c) => return Err(ModelError::InvalidParameter(format!("cadence must be > 0, got {c}")).into()),
        None => usable
            .iter()
            .map(|(_, pts)| median(&mut pts.windows(2).map(|w| w[1].0 - w[0].0).collect::<Vec<_>>()))
            .max()
            .expect("usable is non-empty"),
    };
    let start = usable.iter().map(|(_, p)| p[0].0).max().expect("non-empty");
    let end = usable.iter().map(|(_, p)| p[p.len() - 1].0).max().expect("non-empty");
    let timestamps: Vec<EpochSecs> = (0..).map(|k| start + k * cadence).take_while(|&t| t <= end).collect();
    // Anything shorter could not be preprocessed again.
    if timestamps.len() < MIN_USABLE_POINTS {
        return Err(PipelineError::ShortGrid { ticks: timestamps.len(), cadence_secs: cadence });
    }

    let mut values = Vec::with_capacity(usable.len());
    for (_, pts) in &usable {
        let mut col = Vec::with_capacity(timestamps.len());
        let mut j = 0;
        for &t in &timestamps {
            while j + 1 < pts.len() && pts[j + 1].0 <= t {
                j += 1;
            }
            col.push(pts[j].1);
        }
        values.push(col);
    }
    let scaling: Vec<MinMax> = values.iter().map(|c| MinMax::fit(c)).collect();
    let normalized = values
        .iter()
        .zip(&scaling)
        .map(|(c, s)| c.iter().map(|&v| s.normalize(v)).collect())
        .collect();

    Ok(FeatureTable {
        modalities: usable.into_iter().map(|(m, _)| m).collect(),
        cadence_secs: cadence,
        timestamps,
        values,
        normalized,
        scaling,
        removed,
        unusable,
    })
}

/// `(values[i..i+len], values[i+len])` for every i, in order.
pub fn make_windows(series: &[f64], window_len: usize) -> Vec<Sample> {
    if series.len() <= window_len {
        log::warn!("series of length {} is too short for windows of {window_len}", series.len());
        return Vec::new();
    }
    series
        .windows(window_len + 1)
        .map(|w| Sample { input: w[..window_len].to_vec(), target: vec![w[window_len]] })
        .collect()
}

/// Multivariate windows over aligned columns; inputs are step-major.
pub fn make_windows_multi(columns: &[Vec<f64>], window_len: usize) -> Vec<Sample> {
    let n = columns.iter().map(Vec::len).min().unwrap_or(0);
    if columns.is_empty() || n <= window_len {
        log::warn!("series of length {n} is too short for windows of {window_len}");
        return Vec::new();
    }
    (0..n - window_len)
        .map(|i| Sample {
            input: (i..i + window_len).flat_map(|t| columns.iter().map(move |c| c[t])).collect(),
            target: columns.iter().map(|c| c[i + window_len]).collect(),
        })
        .collect()
}

/// First `ceil(fraction · n)` items train, the rest test. No shuffling.
pub fn chrono_split<T>(samples: &[T], train_fraction: f64) -> (&[T], &[T]) {
    let n = samples.len();
    let k = ((train_fraction * n as f64) - 1e-9).ceil().clamp(0.0, n as f64) as usize;
    samples.split_at(k)
}

/// SHA-256 over the raw bytes of a numeric dataset.
pub fn fingerprint<'a>(rows: impl IntoIterator<Item = &'a [f64]>, labels: &[u8]) -> String {
    let mut h = Sha256::new();
    for r in rows {
        for v in r {
            h.update(v.to_le_bytes());
        }
        h.update([0xff]);
    }
    h.update(labels);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    IsolationForest,
    DenseNet,
    RandomForest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub grid_point: serde_json::Value,
    /// Selection score (F1, accuracy or validation MAE depending on learner).
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disqualified: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub learner: LearnerKind,
    pub grid_point: serde_json::Value,
    pub selection_metric: String,
    pub candidates: Vec<CandidateResult>,
    /// Per-epoch validation MAE of the selected grid point (forecaster only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub val_mae_history: Vec<f64>,
    /// Zero-based index of the retained epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    pub metrics: MetricsReport,
    pub rng_seed: u64,
    pub dataset_fingerprint: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl TrainingRun {
    pub fn best_val_mae(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.val_mae_history[e])
    }
}

fn check_grid<T>(name: &'static str, v: &[T]) -> Result<(), PipelineError> {
    if v.is_empty() { Err(PipelineError::EmptyGrid(name)) } else { Ok(()) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyGrid {
    pub n_estimators: Vec<usize>,
    pub max_samples: Vec<f64>,
    pub contamination: Vec<f64>,
}

impl Default for AnomalyGrid {
    fn default() -> Self {
        Self {
            n_estimators: vec![50, 100, 200],
            max_samples: vec![0.6, 0.8, 1.0],
            contamination: vec![0.01, 0.05, 0.1],
        }
    }
}

impl AnomalyGrid {
    pub fn points(&self) -> Result<Vec<IsolationForestParams>, PipelineError> {
        check_grid("n_estimators", &self.n_estimators)?;
        check_grid("max_samples", &self.max_samples)?;
        check_grid("contamination", &self.contamination)?;
        let mut out = Vec::new();
        for &n in &self.n_estimators {
            for &s in &self.max_samples {
                for &c in &self.contamination {
                    let p = IsolationForestParams { n_estimators: n, max_samples_fraction: s, contamination: c };
                    p.validate()?;
                    out.push(p);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastGrid {
    pub learning_rate: Vec<f64>,
    pub width: Vec<usize>,
}

impl Default for ForecastGrid {
    fn default() -> Self {
        Self { learning_rate: vec![0.01, 0.001, 0.0001], width: vec![64, 128, 256] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresenceGrid {
    pub n_estimators: Vec<usize>,
    /// `"none"` in documents stands for unbounded depth.
    #[serde(with = "depth_list")]
    pub max_depth: Vec<Option<usize>>,
    pub min_samples_split: Vec<usize>,
}

impl Default for PresenceGrid {
    fn default() -> Self {
        use crate::ml::rforest::{MAX_DEPTH_GRID, MIN_SAMPLES_SPLIT_GRID, N_ESTIMATORS_GRID};
        Self {
            n_estimators: N_ESTIMATORS_GRID.to_vec(),
            max_depth: MAX_DEPTH_GRID.to_vec(),
            min_samples_split: MIN_SAMPLES_SPLIT_GRID.to_vec(),
        }
    }
}

mod depth_list {
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Depth {
        Bounded(usize),
        Named(String),
    }

    pub fn serialize<S: Serializer>(v: &[Option<usize>], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|d| d.map_or_else(|| Depth::Named("none".into()), Depth::Bounded))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Option<usize>>, D::Error> {
        Vec::<Depth>::deserialize(d)?
            .into_iter()
            .map(|x| match x {
                Depth::Bounded(n) => Ok(Some(n)),
                Depth::Named(s) if s == "none" => Ok(None),
                Depth::Named(s) => Err(D::Error::custom(format!("max_depth entries are integers or \"none\", got `{s}`"))),
            })
            .collect()
    }
}

impl PresenceGrid {
    pub fn points(&self) -> Result<Vec<RandomForestParams>, PipelineError> {
        check_grid("n_estimators", &self.n_estimators)?;
        check_grid("max_depth", &self.max_depth)?;
        check_grid("min_samples_split", &self.min_samples_split)?;
        let mut out = Vec::new();
        for &n in &self.n_estimators {
            for &d in &self.max_depth {
                for &s in &self.min_samples_split {
                    let p = RandomForestParams { n_estimators: n, max_depth: d, min_samples_split: s };
                    p.validate()?;
                    out.push(p);
                }
            }
        }
        Ok(out)
    }
}

fn verdict_labels(model: &IsolationForestModel, rows: &[Vec<f64>]) -> Result<Vec<usize>, ModelError> {
    rows.iter()
        .map(|r| model.classify(r).map(|v| usize::from(v == Verdict::Anomaly)))
        .collect()
}

fn names(n: [&str; 2]) -> Vec<String> {
    n.iter().map(|s| s.to_string()).collect()
}

/// Anomaly-class metrics of a fitted forest against ground truth.
pub fn evaluate_anomaly(model: &IsolationForestModel, rows: &[Vec<f64>], labels: &[bool]) -> Result<ClassificationReport, PipelineError> {
    let preds = verdict_labels(model, rows)?;
    let truth: Vec<usize> = labels.iter().map(|&b| usize::from(b)).collect();
    Ok(classification_metrics_for(&preds, &truth, &[0, 1], &names(ANOMALY_CLASS_NAMES))?)
}

/// Fits every grid point on `rows` and keeps the one with the best
/// anomaly-class F1 against `labels` (accuracy when no label is anomalous).
/// Ties go to fewer estimators, then lower contamination, then smaller
/// subsample fraction.
pub fn grid_search_anomaly(
    rows: &[Vec<f64>],
    labels: &[bool],
    grid: &AnomalyGrid,
    rng_seed: u64,
) -> Result<(IsolationForestModel, TrainingRun), PipelineError> {
    if rows.is_empty() {
        return Err(PipelineError::Empty);
    }
    if rows.len() != labels.len() {
        return Err(ModelError::LengthMismatch(rows.len(), labels.len()).into());
    }
    let mut warnings = Vec::new();
    let by_accuracy = !labels.iter().any(|&b| b);
    if by_accuracy {
        log::warn!("anomaly grid search: no anomalous labels, selecting by accuracy");
        warnings.push("no anomalous labels; selection fell back to accuracy".to_string());
    }
    let points = grid.points()?;
    let fitted: Vec<(IsolationForestParams, IsolationForestModel, ClassificationReport, f64)> = points
        .par_iter()
        .map(|&p| {
            let model = IsolationForestModel::fit(rows, p, rng_seed)?;
            let report = evaluate_anomaly(&model, rows, labels)?;
            let score = if by_accuracy { report.accuracy } else { report.per_class[1].f1 };
            Ok((p, model, report, score))
        })
        .collect::<Result<_, PipelineError>>()?;

    let best = fitted
        .iter()
        .max_by(|a, b| {
            a.3.total_cmp(&b.3)
                .then(b.0.n_estimators.cmp(&a.0.n_estimators))
                .then(b.0.contamination.total_cmp(&a.0.contamination))
                .then(b.0.max_samples_fraction.total_cmp(&a.0.max_samples_fraction))
        })
        .expect("grid has at least one point");
    let point = |p: &IsolationForestParams| {
        json!({"n_estimators": p.n_estimators, "max_samples": p.max_samples_fraction, "contamination": p.contamination})
    };
    let label_bytes: Vec<u8> = labels.iter().map(|&b| u8::from(b)).collect();
    let run = TrainingRun {
        learner: LearnerKind::IsolationForest,
        grid_point: point(&best.0),
        selection_metric: if by_accuracy { "accuracy" } else { "anomaly_f1" }.into(),
        candidates: fitted
            .iter()
            .map(|(p, _, _, s)| CandidateResult { grid_point: point(p), score: Some(*s), disqualified: None })
            .collect(),
        val_mae_history: Vec::new(),
        best_epoch: None,
        metrics: MetricsReport::Classification(best.2.clone()),
        rng_seed,
        dataset_fingerprint: fingerprint(rows.iter().map(Vec::as_slice), &label_bytes),
        warnings,
    };
    Ok((best.1.clone(), run))
}

/// Single-feature rows for one modality plus their labels.
pub fn anomaly_rows(readings: &[SensorReading], labels: &[bool], modality: Modality) -> (Vec<Vec<f64>>, Vec<bool>) {
    readings
        .iter()
        .zip(labels)
        .filter(|(r, _)| r.modality() == modality)
        .map(|(r, &l)| (vec![r.value()], l))
        .unzip()
}

/// (temperature, humidity, CO2) rows aligned per device and timestamp; a row
/// is anomalous when any of its three readings is.
pub fn combined_anomaly_rows(readings: &[SensorReading], labels: &[bool]) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut acc: BTreeMap<(&str, EpochSecs), ([Option<f64>; 3], bool)> = BTreeMap::new();
    for (r, &l) in readings.iter().zip(labels) {
        let Some(slot) = Modality::CLIMATE.iter().position(|&m| m == r.modality()) else { continue };
        let e = acc.entry((r.device_id(), r.timestamp())).or_insert(([None; 3], false));
        e.0[slot] = Some(r.value());
        e.1 |= l;
    }
    acc.into_values()
        .filter_map(|(v, l)| Some((vec![v[0]?, v[1]?, v[2]?], l)))
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self { epochs: DEFAULT_EPOCHS, batch_size: DEFAULT_BATCH_SIZE }
    }
}

/// Mean absolute error over every output of every sample (normalized units).
pub fn forecast_mae(model: &DenseNetModel, samples: &[Sample]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    let mut n = 0usize;
    for s in samples {
        for (p, t) in model.forward(&s.input)?.iter().zip(&s.target) {
            total += (p - t).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(ModelError::EmptyData);
    }
    Ok(total / n as f64)
}

/// Regression metrics, optionally de-normalized back to physical units.
pub fn evaluate_forecaster(model: &DenseNetModel, samples: &[Sample], physical: bool) -> Result<RegressionReport, PipelineError> {
    let mut preds = Vec::new();
    let mut targets = Vec::new();
    for s in samples {
        let out = model.forward(&s.input)?;
        for (k, (p, t)) in out.iter().zip(&s.target).enumerate() {
            let sc = model.series_scaling[k];
            if physical {
                preds.push(sc.denormalize(*p));
                targets.push(sc.denormalize(*t));
            } else {
                preds.push(*p);
                targets.push(*t);
            }
        }
    }
    Ok(regression_metrics(&preds, &targets)?)
}

/// Mean absolute error of repeating the last observed value (normalized units).
pub fn naive_last_value_mae(samples: &[Sample]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for s in samples {
        let k = s.target.len();
        let last = &s.input[s.input.len() - k..];
        for (l, t) in last.iter().zip(&s.target) {
            total += (l - t).abs();
            n += 1;
        }
    }
    if n == 0 { 0.0 } else { total / n as f64 }
}

struct ForecastCandidate {
    lr: f64,
    width: usize,
    outcome: Result<(DenseNetModel, Vec<f64>, usize), String>,
}

/// Index of the smallest value; the first one wins ties.
pub fn argmin(values: &[f64]) -> Option<usize> {
    (0..values.len()).min_by(|&a, &b| values[a].total_cmp(&values[b]))
}

fn train_one(
    fit: &[Sample],
    val: &[Sample],
    window_len: usize,
    scaling: &[MinMax],
    lr: f64,
    width: usize,
    cfg: ForecastConfig,
    rng_seed: u64,
) -> Result<(DenseNetModel, Vec<f64>, usize), ModelError> {
    let mut model = DenseNetModel::with_shape(window_len, scaling.len(), &[width, width], seed::derive(rng_seed, "forecaster"));
    model.series_scaling = scaling.to_vec();
    let mut adam = AdamState::new(model.param_count());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    for epoch in 0..cfg.epochs {
        for batch in fit.chunks(cfg.batch_size.max(1)) {
            model.train_step(batch, lr, &mut adam)?;
        }
        let mae = forecast_mae(&model, val)?;
        if !mae.is_finite() {
            return Err(ModelError::NonFiniteLoss);
        }
        history.push(mae);
        if mae < best.0 {
            best = (mae, model.clone(), epoch);
        }
    }
    Ok((best.1, history, best.2))
}

/// Grid search over learning rate and width. Each point trains for
/// `cfg.epochs` epochs on chronological batches and keeps its epoch-best
/// snapshot by validation MAE; the validation slice is the last 10 % of
/// `train`. The point with the lowest checkpointed MAE wins (ties: smaller
/// width, then larger learning rate).
pub fn train_forecaster(
    train: &[Sample],
    series_scaling: &[MinMax],
    grid: &ForecastGrid,
    cfg: ForecastConfig,
    rng_seed: u64,
) -> Result<(DenseNetModel, TrainingRun), PipelineError> {
    check_grid("learning_rate", &grid.learning_rate)?;
    check_grid("width", &grid.width)?;
    let first = train.first().ok_or(PipelineError::Empty)?;
    if cfg.epochs == 0 {
        return Err(ModelError::InvalidParameter("epochs must be positive".into()).into());
    }
    let n_series = series_scaling.len();
    if n_series == 0 || first.target.len() != n_series || first.input.len() % n_series != 0 {
        return Err(ModelError::InvalidParameter("samples do not match the series scaling".into()).into());
    }
    let window_len = first.input.len() / n_series;
    let (fit, val) = if train.len() >= 2 {
        let n_val = ((VALIDATION_FRACTION * train.len() as f64).round() as usize).clamp(1, train.len() - 1);
        train.split_at(train.len() - n_val)
    } else {
        (train, train)
    };

    let mut combos = Vec::new();
    for &lr in &grid.learning_rate {
        for &width in &grid.width {
            combos.push((lr, width));
        }
    }
    let results: Vec<ForecastCandidate> = combos
        .par_iter()
        .map(|&(lr, width)| ForecastCandidate {
            lr,
            width,
            outcome: train_one(fit, val, window_len, series_scaling, lr, width, cfg, rng_seed).map_err(|e| e.to_string()),
        })
        .collect();

    let point = |lr: f64, width: usize| json!({"learning_rate": lr, "width": width});
    let best = results
        .iter()
        .filter_map(|c| c.outcome.as_ref().ok().map(|(m, h, e)| (c, m, h, *e)))
        .min_by(|a, b| {
            a.2[a.3]
                .total_cmp(&b.2[b.3])
                .then(a.0.width.cmp(&b.0.width))
                .then(b.0.lr.total_cmp(&a.0.lr))
        })
        .ok_or(PipelineError::AllDisqualified)?;
    let (cand, model, history, best_epoch) = best;

    let rows = train.iter().map(|s| s.input.as_slice()).chain(train.iter().map(|s| s.target.as_slice()));
    let run = TrainingRun {
        learner: LearnerKind::DenseNet,
        grid_point: point(cand.lr, cand.width),
        selection_metric: "val_mae".into(),
        candidates: results
            .iter()
            .map(|c| match &c.outcome {
                Ok((_, h, e)) => CandidateResult { grid_point: point(c.lr, c.width), score: Some(h[*e]), disqualified: None },
                Err(reason) => CandidateResult { grid_point: point(c.lr, c.width), score: None, disqualified: Some(reason.clone()) },
            })
            .collect(),
        val_mae_history: history.clone(),
        best_epoch: Some(best_epoch),
        metrics: MetricsReport::Regression(evaluate_forecaster(model, val, false)?),
        rng_seed,
        dataset_fingerprint: fingerprint(rows, &[]),
        warnings: Vec::new(),
    };
    Ok((model.clone(), run))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PresenceOptions {
    /// Oversample the minority class in the training split.
    pub rebalance: bool,
}

/// Grid-searched occupancy classifier on (temperature, humidity, CO2), chosen
/// by weighted F1 on the chronological test split. Ties go to fewer trees,
/// then shallower depth, then smaller `min_samples_split`.
pub fn train_presence(
    records: &[OccupancyRecord],
    grid: &PresenceGrid,
    options: PresenceOptions,
    rng_seed: u64,
) -> Result<(RandomForestModel, TrainingRun), PipelineError> {
    if records.len() < 2 {
        return Err(PipelineError::Empty);
    }
    if records.iter().all(|r| r.occupancy == records[0].occupancy) {
        return Err(PipelineError::SingleClass);
    }
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| r.timestamp);
    let (train, test) = chrono_split(&sorted, DEFAULT_TRAIN_FRACTION);
    let test = if test.is_empty() { train } else { test };

    let mut x_train: Vec<Vec<f64>> = train.iter().map(|r| r.features().to_vec()).collect();
    let mut y_train: Vec<u8> = train.iter().map(|r| r.occupancy).collect();
    if options.rebalance {
        rebalance(&mut x_train, &mut y_train);
    }
    let points = grid.points()?;
    let fitted: Vec<(RandomForestParams, RandomForestModel, ClassificationReport)> = points
        .par_iter()
        .map(|&p| {
            let model = RandomForestModel::fit_standardized(&x_train, &y_train, p, rng_seed)?;
            let report = evaluate_presence(&model, test)?;
            Ok((p, model, report))
        })
        .collect::<Result<_, PipelineError>>()?;

    let depth_key = |d: Option<usize>| d.unwrap_or(usize::MAX);
    let best = fitted
        .iter()
        .max_by(|a, b| {
            a.2.weighted
                .f1
                .total_cmp(&b.2.weighted.f1)
                .then(b.0.n_estimators.cmp(&a.0.n_estimators))
                .then(depth_key(b.0.max_depth).cmp(&depth_key(a.0.max_depth)))
                .then(b.0.min_samples_split.cmp(&a.0.min_samples_split))
        })
        .expect("grid has at least one point");
    let point = |p: &RandomForestParams| {
        json!({"n_estimators": p.n_estimators, "max_depth": p.max_depth, "min_samples_split": p.min_samples_split})
    };
    let feats: Vec<[f64; 3]> = sorted.iter().map(OccupancyRecord::features).collect();
    let labels: Vec<u8> = sorted.iter().map(|r| r.occupancy).collect();
    let run = TrainingRun {
        learner: LearnerKind::RandomForest,
        grid_point: point(&best.0),
        selection_metric: "weighted_f1".into(),
        candidates: fitted
            .iter()
            .map(|(p, _, r)| CandidateResult { grid_point: point(p), score: Some(r.weighted.f1), disqualified: None })
            .collect(),
        val_mae_history: Vec::new(),
        best_epoch: None,
        metrics: MetricsReport::Classification(best.2.clone()),
        rng_seed,
        dataset_fingerprint: fingerprint(feats.iter().map(|f| f.as_slice()), &labels),
        warnings: Vec::new(),
    };
    Ok((best.1.clone(), run))
}

fn rebalance(x: &mut Vec<Vec<f64>>, y: &mut Vec<u8>) {
    let ones = y.iter().filter(|&&l| l == 1).count();
    let zeros = y.len() - ones;
    let (minority, deficit) = if ones < zeros { (1u8, zeros - ones) } else { (0u8, ones - zeros) };
    let pool: Vec<usize> = (0..y.len()).filter(|&i| y[i] == minority).collect();
    if pool.is_empty() {
        return;
    }
    for k in 0..deficit {
        let i = pool[k % pool.len()];
        x.push(x[i].clone());
        y.push(minority);
    }
}

fn evaluate_presence(model: &RandomForestModel, records: &[OccupancyRecord]) -> Result<ClassificationReport, PipelineError> {
    let stream: Vec<PresenceObservation> = records.iter().map(PresenceObservation::from).collect();
    evaluate_on_stream(model, &stream)
}

/// One observation of a live stream; `occupancy` is the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresenceObservation {
    pub timestamp: EpochSecs,
    pub temperature: f64,
    pub humidity: f64,
    pub co2: f64,
    pub occupancy: Option<u8>,
}

impl From<&OccupancyRecord> for PresenceObservation {
    fn from(r: &OccupancyRecord) -> Self {
        Self {
            timestamp: r.timestamp,
            temperature: r.temperature,
            humidity: r.humidity,
            co2: r.co2,
            occupancy: Some(r.occupancy),
        }
    }
}

/// Unoccupied / Occupied / Weighted-avg report over a labelled stream.
pub fn evaluate_on_stream(model: &RandomForestModel, stream: &[PresenceObservation]) -> Result<ClassificationReport, PipelineError> {
    if stream.is_empty() {
        return Err(PipelineError::Empty);
    }
    let mut preds = Vec::with_capacity(stream.len());
    let mut truth = Vec::with_capacity(stream.len());
    for (i, o) in stream.iter().enumerate() {
        let label = o.occupancy.ok_or(PipelineError::UnlabeledStream(i))?;
        truth.push(usize::from(label));
        preds.push(usize::from(model.predict(&[o.temperature, o.humidity, o.co2])?.label));
    }
    Ok(classification_metrics_for(&preds, &truth, &[0, 1], &names(PRESENCE_CLASS_NAMES))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reading(m: Modality, v: f64, t: i64) -> SensorReading {
        SensorReading::new("d", "r", m, v, t).unwrap()
    }

    #[test]
    fn unbounded_depth_is_spelled_none() {
        let g = PresenceGrid::default();
        let text = serde_json::to_string(&g).unwrap();
        assert!(text.contains(r#""max_depth":[5,10,"none"]"#), "{text}");
        assert_eq!(serde_json::from_str::<PresenceGrid>(&text).unwrap(), g);
        let bad = text.replace(r#""none""#, r#""deep""#);
        assert!(serde_json::from_str::<PresenceGrid>(&bad).is_err());
    }

    #[test]
    fn preprocess_drops_two_hundred_degrees() {
        let mut rs: Vec<SensorReading> = (0..10).map(|i| reading(Modality::Temperature, 21.0 + i as f64 * 0.1, i * 60)).collect();
        rs.push(reading(Modality::Temperature, 200.0, 630));
        let t = preprocess(&rs, &PlausibilityRules::default(), None).unwrap();
        assert_eq!(t.removed, 1);
        assert!(t.values[0].iter().all(|&v| v < 50.0));
        assert!(t.normalized[0].iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn constant_series_normalizes_to_zero() {
        let rs: Vec<SensorReading> = (0..6).map(|i| reading(Modality::Temperature, 21.0, i * 60)).collect();
        let t = preprocess(&rs, &PlausibilityRules::default(), None).unwrap();
        assert!(t.normalized[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn different_cadences_align_on_one_grid() {
        let mut rs: Vec<SensorReading> = (0..20).map(|i| reading(Modality::Temperature, 20.0 + i as f64, i * 30)).collect();
        rs.extend((0..10).map(|i| reading(Modality::Co2, 400.0 + i as f64, i * 60)));
        let t = preprocess(&rs, &PlausibilityRules::default(), None).unwrap();
        assert_eq!(t.cadence_secs, 60);
        assert_eq!(t.timestamps, (0..10).map(|i| i * 60).collect::<Vec<_>>());
        assert_eq!(t.values.len(), 2);
        assert!(t.values.iter().all(|c| c.len() == t.timestamps.len()));
        // temperature at t=60 is the 30 s reading with index 2
        assert_eq!(t.values[t.column(Modality::Temperature).unwrap()][1], 22.0);
    }

    #[test]
    fn short_modalities_are_reported_unusable() {
        let mut rs: Vec<SensorReading> = (0..6).map(|i| reading(Modality::Temperature, 21.0, i * 60)).collect();
        rs.extend((0..3).map(|i| reading(Modality::Co2, 500.0, i * 60)));
        let t = preprocess(&rs, &PlausibilityRules::default(), None).unwrap();
        assert_eq!(t.unusable, vec![Modality::Co2]);
        let only_short: Vec<SensorReading> = (0..3).map(|i| reading(Modality::Co2, 500.0, i * 60)).collect();
        assert!(matches!(
            preprocess(&only_short, &PlausibilityRules::default(), None),
            Err(PipelineError::NoUsableModality(_))
        ));
        assert!(matches!(preprocess(&[], &PlausibilityRules::default(), None), Err(PipelineError::Empty)));
    }

    #[test]
    fn preprocess_is_idempotent_on_its_output() {
        let mut rs: Vec<SensorReading> = (0..40).map(|i| reading(Modality::Temperature, 20.0 + (i % 7) as f64 * 0.3, i * 45)).collect();
        rs.extend((0..25).map(|i| reading(Modality::Humidity, 40.0 + (i % 5) as f64, i * 70 + 10)));
        rs.push(reading(Modality::Humidity, -4.0, 100));
        let rules = PlausibilityRules::default();
        let once = preprocess(&rs, &rules, None).unwrap();
        let again = preprocess(&once.to_readings("x", "y").unwrap(), &rules, Some(once.cadence_secs)).unwrap();
        assert_eq!(again.removed, 0);
        assert_eq!(once.timestamps, again.timestamps);
        assert_eq!(once.values, again.values);
        assert_eq!(once.normalized, again.normalized);
        assert_eq!(once.scaling, again.scaling);
    }

    #[test]
    fn windows_follow_definition() {
        let w = make_windows(&[20.0, 20.5, 21.0, 21.5], 3);
        assert_eq!(w, vec![Sample { input: vec![20.0, 20.5, 21.0], target: vec![21.5] }]);
        assert!(make_windows(&[1.0, 2.0, 3.0], 3).is_empty());
        let five = make_windows(&[1.0, 2.0, 3.0, 4.0, 5.0], 3);
        assert_eq!(five.len(), 2);
        assert_eq!(five[1].input, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn multi_windows_are_step_major() {
        let cols = vec![vec![1.0, 2.0, 3.0, 4.0], vec![10.0, 20.0, 30.0, 40.0]];
        let w = make_windows_multi(&cols, 3);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].input, vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0]);
        assert_eq!(w[0].target, vec![4.0, 40.0]);
    }

    #[test]
    fn chrono_split_uses_ceiling() {
        let ten: Vec<i32> = (0..10).collect();
        let (a, b) = chrono_split(&ten, 0.8);
        assert_eq!((a.len(), b.len()), (8, 2));
        assert_eq!(a, &[0, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(b, &[8, 9]);
        let five: Vec<i32> = (0..5).collect();
        let (a, b) = chrono_split(&five, 0.8);
        assert_eq!((a.len(), b.len()), (4, 1));
    }

    #[test]
    fn argmin_picks_first_minimum() {
        assert_eq!(argmin(&[0.5, 0.2, 0.4]), Some(1));
        assert_eq!(argmin(&[0.2, 0.2]), Some(0));
    }

    #[test]
    fn grid_points_cover_the_product() {
        assert_eq!(AnomalyGrid::default().points().unwrap().len(), 27);
        assert_eq!(PresenceGrid::default().points().unwrap().len(), 27);
        let empty = AnomalyGrid { n_estimators: vec![], ..AnomalyGrid::default() };
        assert!(matches!(empty.points(), Err(PipelineError::EmptyGrid("n_estimators"))));
        let bad: Result<AnomalyGrid, _> =
            serde_json::from_str(r#"{"n_estimators":[1],"max_samples":[1.0],"contamination":[0.1],"depth":[2]}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn presence_rejects_single_class() {
        let recs: Vec<OccupancyRecord> = (0..10)
            .map(|i| OccupancyRecord { timestamp: i, temperature: 20.0, humidity: 30.0, light: 0.0, co2: 500.0, occupancy: 0 })
            .collect();
        assert!(matches!(
            train_presence(&recs, &PresenceGrid::default(), PresenceOptions::default(), 1),
            Err(PipelineError::SingleClass)
        ));
    }

    #[test]
    fn stream_without_labels_is_rejected() {
        let t = crate::ml::rforest::ClassificationTree::from_nodes(vec![crate::ml::rforest::TreeNode::Leaf { counts: [1, 0] }]).unwrap();
        let m = RandomForestModel::from_trees(vec![t], 3, RandomForestParams::default());
        let obs = PresenceObservation { timestamp: 0, temperature: 1.0, humidity: 1.0, co2: 1.0, occupancy: None };
        assert!(matches!(evaluate_on_stream(&m, &[obs]), Err(PipelineError::UnlabeledStream(0))));
    }

    #[test]
    fn rebalance_equalizes_classes() {
        let mut x = vec![vec![0.0]; 5];
        let mut y = vec![0, 0, 0, 0, 1];
        rebalance(&mut x, &mut y);
        assert_eq!(y.iter().filter(|&&l| l == 1).count(), 4);
        assert_eq!(x.len(), 8);
    }
}
