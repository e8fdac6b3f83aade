// SPDX-License-Identifier: Apache-2.0

//! Store range queries against a linear scan over everything appended.

use edgespace_core::store::SeriesStore;
use edgespace_core::{Modality, SensorReading, TimeWindow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DEVICES: [&str; 3] = ["d0", "d1", "d2"];
const MODALITIES: [Modality; 2] = [Modality::Temperature, Modality::Co2];
const SPAN: i64 = 100_000;

pub fn random_readings(rng: &mut ChaCha8Rng, n: usize) -> Vec<SensorReading> {
    (0..n)
        .map(|k| {
            let d = DEVICES[rng.random_range(0..DEVICES.len())];
            let m = MODALITIES[rng.random_range(0..MODALITIES.len())];
            // Coarse timestamps so equal-time readings occur.
            let t = rng.random_range(0..SPAN / 10) * 10;
            SensorReading::new(d, "room", m, k as f64, t).unwrap()
        })
        .collect()
}

fn scan(all: &[SensorReading], device: &str, m: Modality, w: TimeWindow) -> Vec<SensorReading> {
    let mut out: Vec<SensorReading> = all
        .iter()
        .filter(|r| r.device_id() == device && r.modality() == m && w.contains(r.timestamp()))
        .cloned()
        .collect();
    // Stable: equal timestamps keep append order.
    out.sort_by_key(|r| r.timestamp());
    out
}

/// Appends `n` random readings and compares `windows` random range queries.
pub fn compare(store: &SeriesStore, seed: u64, n: usize, windows: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all = random_readings(&mut rng, n);
    store.append_all(all.iter().cloned()).map_err(|e| e.to_string())?;
    if store.len() != n {
        return Err(format!("store holds {} of {n}", store.len()));
    }
    let mut compared = 0;
    for _ in 0..windows {
        let d = DEVICES[rng.random_range(0..DEVICES.len())];
        let m = MODALITIES[rng.random_range(0..MODALITIES.len())];
        let a = rng.random_range(-100..SPAN + 100);
        let b = rng.random_range(a..SPAN + 200);
        let w = TimeWindow::new(a, b).map_err(|e| e.to_string())?;
        let want = scan(&all, d, m, w);
        let got = store.query(d, m, w);
        if got != want {
            return Err(format!("window [{a}, {b}] on {d}/{m:?}: {} vs {} readings", got.len(), want.len()));
        }
        let k = rng.random_range(0..20);
        let whole = scan(&all, d, m, TimeWindow::new(i64::MIN, i64::MAX).unwrap());
        let tail = &whole[whole.len().saturating_sub(k)..];
        if store.latest(d, m, k) != tail {
            return Err(format!("latest({k}) on {d}/{m:?} differs"));
        }
        compared += 1;
    }
    Ok(compared)
}
