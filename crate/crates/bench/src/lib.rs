// SPDX-License-Identifier: Apache-2.0

//! Fixtures shared by the benches.

use edgespace_core::ingest::{generate_synthetic, AnomalyInjection, AnomalyKind, SyntheticData, SyntheticProfile};
use edgespace_core::{demo_building, TimeWindow};

pub const MONDAY: i64 = 1_700_438_400;

/// `days` of demo-building readings at 5-minute cadence with 5 % out-of-range anomalies.
pub fn week_of_readings(days: i64, seed: u64) -> SyntheticData {
    let profile = SyntheticProfile {
        anomalies: AnomalyInjection { rate: 0.05, kind: AnomalyKind::OutOfRange },
        ..SyntheticProfile::default()
    };
    let window = TimeWindow::new(MONDAY, MONDAY + days * 86_400).expect("positive span");
    generate_synthetic(&profile, &demo_building(), window, 300, seed).expect("valid profile")
}

/// Samples of a daily sinusoid in [0, 1] at 10-minute cadence.
pub fn sinusoid(days: usize) -> Vec<f64> {
    (0..days * 144).map(|k| 0.5 + 0.5 * (std::f64::consts::TAU * k as f64 / 144.0).sin()).collect()
}
