// SPDX-License-Identifier: Apache-2.0

use criterion::{criterion_group, criterion_main, Criterion};
use edgespace_bench::{week_of_readings, MONDAY};
use edgespace_core::store::SeriesStore;
use edgespace_core::{Modality, TimeWindow};
use std::hint::black_box;

fn store(c: &mut Criterion) {
    let data = week_of_readings(7, 3);
    c.bench_function("store_append_week", |b| {
        b.iter(|| {
            let s = SeriesStore::in_memory(None);
            s.append_all(data.readings.iter().cloned()).unwrap()
        })
    });
    let s = SeriesStore::in_memory(None);
    s.append_all(data.readings.iter().cloned()).unwrap();
    let day = TimeWindow::new(MONDAY + 2 * 86_400, MONDAY + 3 * 86_400).unwrap();
    c.bench_function("store_query_one_day", |b| b.iter(|| s.query(black_box("shellyht-rdRoom"), Modality::Co2, day).len()));
}

criterion_group!(benches, store);
criterion_main!(benches);
