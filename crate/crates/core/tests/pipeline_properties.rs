// SPDX-License-Identifier: Apache-2.0

use edgespace_core::ingest::OccupancyRecord;
use edgespace_core::ml::densenet::{MinMax, Sample};
use edgespace_core::ml::{IsolationForestModel, IsolationForestParams, ModelDocument, TrainedModel};
use edgespace_core::pipeline::{
    chrono_split, evaluate_anomaly, evaluate_forecaster, evaluate_on_stream, grid_search_anomaly, make_windows, preprocess,
    train_forecaster, train_presence, AnomalyGrid, ForecastConfig, ForecastGrid, PresenceGrid, PresenceObservation,
    PresenceOptions,
};
use edgespace_core::{Modality, PlausibilityRules, SensorReading};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn anomaly_data(seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..240)
        .map(|i| {
            if i % 20 == 7 {
                (vec![rng.random_range(80.0..120.0), rng.random_range(-5.0..5.0)], true)
            } else {
                (vec![rng.random_range(20.0..24.0), rng.random_range(40.0..50.0)], false)
            }
        })
        .unzip()
}

fn occupancy(seed: u64, n: usize) -> Vec<OccupancyRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let occ = u8::from((i / 15) % 2 == 1);
            let f = f64::from(occ);
            OccupancyRecord {
                timestamp: 1_700_000_000 + 60 * i as i64,
                temperature: 21.0 + f + rng.random_range(-0.3..0.3),
                humidity: 45.0 + rng.random_range(-2.0..2.0),
                light: 100.0 + 300.0 * f,
                co2: 450.0 + 400.0 * f + rng.random_range(-40.0..40.0),
                occupancy: occ,
            }
        })
        .collect()
}

fn sine_samples(n: usize) -> (Vec<Sample>, Vec<MinMax>) {
    let series: Vec<f64> = (0..n).map(|i| 21.0 + 2.0 * (i as f64 * 0.2).sin()).collect();
    let s = MinMax::fit(&series);
    let norm: Vec<f64> = series.iter().map(|&v| s.normalize(v)).collect();
    (make_windows(&norm, 3), vec![s])
}

fn shuffled<T: Clone + std::fmt::Debug>(v: Vec<T>) -> impl Strategy<Value = Vec<T>> {
    Just(v).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn anomaly_selection_ignores_grid_order(
        n in shuffled(vec![10usize, 20, 40]),
        s in shuffled(vec![0.5, 1.0]),
        c in shuffled(vec![0.01, 0.05, 0.1]),
        seed in any::<u64>(),
    ) {
        let (rows, labels) = anomaly_data(seed);
        let canonical = AnomalyGrid { n_estimators: vec![10, 20, 40], max_samples: vec![0.5, 1.0], contamination: vec![0.01, 0.05, 0.1] };
        let permuted = AnomalyGrid { n_estimators: n, max_samples: s, contamination: c };
        let (ma, ra) = grid_search_anomaly(&rows, &labels, &canonical, seed).unwrap();
        let (mb, rb) = grid_search_anomaly(&rows, &labels, &permuted, seed).unwrap();
        prop_assert_eq!(&ra.grid_point, &rb.grid_point);
        prop_assert_eq!(&ra.metrics, &rb.metrics);
        prop_assert_eq!(ma, mb);
    }

    #[test]
    fn presence_selection_ignores_grid_order(
        n in shuffled(vec![3usize, 5, 8]),
        d in shuffled(vec![Some(2usize), Some(4), None]),
        m in shuffled(vec![2usize, 5]),
        seed in any::<u64>(),
    ) {
        let records = occupancy(seed, 150);
        let canonical = PresenceGrid { n_estimators: vec![3, 5, 8], max_depth: vec![Some(2), Some(4), None], min_samples_split: vec![2, 5] };
        let permuted = PresenceGrid { n_estimators: n, max_depth: d, min_samples_split: m };
        let (ma, ra) = train_presence(&records, &canonical, PresenceOptions::default(), seed).unwrap();
        let (mb, rb) = train_presence(&records, &permuted, PresenceOptions::default(), seed).unwrap();
        prop_assert_eq!(&ra.grid_point, &rb.grid_point);
        prop_assert_eq!(ma, mb);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn forecaster_selection_ignores_grid_order(
        lr in shuffled(vec![0.01, 0.001]),
        w in shuffled(vec![4usize, 8]),
        seed in any::<u64>(),
    ) {
        let (samples, scaling) = sine_samples(80);
        let cfg = ForecastConfig { epochs: 4, batch_size: 16 };
        let canonical = ForecastGrid { learning_rate: vec![0.01, 0.001], width: vec![4, 8] };
        let permuted = ForecastGrid { learning_rate: lr, width: w };
        let (ma, ra) = train_forecaster(&samples, &scaling, &canonical, cfg, seed).unwrap();
        let (mb, rb) = train_forecaster(&samples, &scaling, &permuted, cfg, seed).unwrap();
        prop_assert_eq!(&ra.grid_point, &rb.grid_point);
        prop_assert_eq!(&ra.val_mae_history, &rb.val_mae_history);
        prop_assert_eq!(ma, mb);
    }

    #[test]
    fn checkpointed_mae_never_exceeds_last_epoch(seed in any::<u64>(), epochs in 1usize..12, lr in prop::sample::select(vec![0.05, 0.01, 0.001])) {
        let (samples, scaling) = sine_samples(90);
        let cfg = ForecastConfig { epochs, batch_size: 8 };
        let grid = ForecastGrid { learning_rate: vec![lr], width: vec![6] };
        let (_, run) = train_forecaster(&samples, &scaling, &grid, cfg, seed).unwrap();
        let best = run.best_val_mae().unwrap();
        prop_assert_eq!(run.val_mae_history.len(), epochs);
        prop_assert!(best <= *run.val_mae_history.last().unwrap());
        prop_assert!(run.val_mae_history.iter().all(|&m| best <= m));
    }
}

fn irregular_readings() -> impl Strategy<Value = Vec<SensorReading>> {
    let modality = prop::sample::select(vec![Modality::Temperature, Modality::Humidity, Modality::Co2]);
    prop::collection::vec((0i64..20_000, modality, -20.0f64..6000.0), 20..200).prop_map(|rows| {
        rows.into_iter()
            .map(|(t, m, v)| SensorReading::new("dev", "room", m, v, 1_700_000_000 + t).unwrap())
            .collect()
    })
}

proptest! {
    #[test]
    fn preprocess_is_idempotent(readings in irregular_readings()) {
        let rules = PlausibilityRules::default();
        let Ok(first) = preprocess(&readings, &rules, None) else { return Ok(()); };
        let again = first.to_readings("dev", "room").unwrap();
        for cadence in [Some(first.cadence_secs), None] {
            let second = preprocess(&again, &rules, cadence).unwrap();
            prop_assert_eq!(second.removed, 0);
            prop_assert_eq!(&second.modalities, &first.modalities);
            prop_assert_eq!(second.cadence_secs, first.cadence_secs);
            prop_assert_eq!(&second.timestamps, &first.timestamps);
            prop_assert_eq!(&second.values, &first.values);
            prop_assert_eq!(&second.normalized, &first.normalized);
        }
    }
}

fn reload(m: TrainedModel) -> TrainedModel {
    let text = ModelDocument::from(m).to_json().unwrap();
    ModelDocument::from_json(&text).unwrap().model
}

#[test]
fn reloaded_models_reproduce_their_metrics() {
    let (rows, labels) = anomaly_data(5);
    let (iforest, run) = grid_search_anomaly(&rows, &labels, &AnomalyGrid::default(), 5).unwrap();
    let TrainedModel::IsolationForest(back) = reload(TrainedModel::IsolationForest(iforest)) else { panic!("kind") };
    assert_eq!(run.metrics, edgespace_core::ml::MetricsReport::Classification(evaluate_anomaly(&back, &rows, &labels).unwrap()));

    let records = occupancy(9, 300);
    let (forest, _) = train_presence(&records, &PresenceGrid::default(), PresenceOptions::default(), 9).unwrap();
    let (_, test) = chrono_split(&records, 0.8);
    let stream: Vec<PresenceObservation> = test.iter().map(PresenceObservation::from).collect();
    let before = evaluate_on_stream(&forest, &stream).unwrap();
    let TrainedModel::RandomForest(back) = reload(TrainedModel::RandomForest(forest)) else { panic!("kind") };
    assert_eq!(before, evaluate_on_stream(&back, &stream).unwrap());

    let (samples, scaling) = sine_samples(120);
    let (train, test) = chrono_split(&samples, 0.8);
    let grid = ForecastGrid { learning_rate: vec![0.01], width: vec![8] };
    let (net, _) = train_forecaster(train, &scaling, &grid, ForecastConfig { epochs: 5, batch_size: 32 }, 3).unwrap();
    let before = evaluate_forecaster(&net, test, true).unwrap();
    let TrainedModel::DenseNet(back) = reload(TrainedModel::DenseNet(net)) else { panic!("kind") };
    assert_eq!(before, evaluate_forecaster(&back, test, true).unwrap());
}

#[test]
fn uniform_data_scores_near_one_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let rows: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
    let params = IsolationForestParams { n_estimators: 100, max_samples_fraction: 256.0 / 2000.0, contamination: 0.05 };
    let m = IsolationForestModel::fit(&rows, params, 11).unwrap();
    let mean = rows.iter().map(|r| m.score(r).unwrap()).sum::<f64>() / rows.len() as f64;
    assert!((mean - 0.5).abs() <= 0.07, "mean score {mean}");
}

fn shifted(stream: &[PresenceObservation], ppm: f64) -> Vec<PresenceObservation> {
    stream.iter().map(|o| PresenceObservation { co2: o.co2 + ppm, ..*o }).collect()
}

#[test]
fn co2_bias_moves_recall_in_the_expected_direction() {
    use edgespace_core::ingest::{generate_synthetic, occupancy_records, SyntheticProfile};
    let mut profile = SyntheticProfile::default();
    profile.anomalies.rate = 0.0;
    let building = edgespace_core::demo_building();
    let from = 1_700_438_400; // a Monday, 00:00 UTC
    let window = edgespace_core::TimeWindow::new(from, from + 7 * 86_400).unwrap();
    let data = generate_synthetic(&profile, &building, window, 300, 77).unwrap();
    let records = occupancy_records(&data.readings, "rdRoom", |t| profile.is_occupied(t));
    let (model, _) = train_presence(&records, &PresenceGrid::default(), PresenceOptions::default(), 77).unwrap();
    let (_, test) = chrono_split(&records, 0.5);
    let stream: Vec<PresenceObservation> = test.iter().map(PresenceObservation::from).collect();
    let base = evaluate_on_stream(&model, &stream).unwrap();
    let low = evaluate_on_stream(&model, &shifted(&stream, -100.0)).unwrap();
    let high = evaluate_on_stream(&model, &shifted(&stream, 100.0)).unwrap();
    assert!(low.per_class[1].recall < base.per_class[1].recall, "{} vs {}", low.per_class[1].recall, base.per_class[1].recall);
    assert!(high.per_class[0].recall < base.per_class[0].recall, "{} vs {}", high.per_class[0].recall, base.per_class[0].recall);
}
