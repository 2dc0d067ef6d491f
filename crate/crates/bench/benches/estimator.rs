use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rotsync::signal::interpolate;
use rotsync::{estimate_offset, EstimatorConfig, MagnitudeWindow};
use std::hint::black_box;

fn series(n: usize, phase: f64) -> Vec<f64> {
    (0..n)
        .map(|i| 0.05 + 0.04 * ((i as f64 + phase) * 0.21).sin().abs())
        .collect()
}

fn bench_estimate(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimate_offset");
    for &(w, b) in &[(20, 10), (50, 10), (100, 10), (50, 100)] {
        let r1 = MagnitudeWindow::new(series(w, 0.0), w as u64 - 1).unwrap();
        let r2 = MagnitudeWindow::new(series(w, -1.5), w as u64 - 1).unwrap();
        let cfg = EstimatorConfig {
            window_size: w,
            interpolation_factor: b,
            ..Default::default()
        };
        group.bench_with_input(BenchmarkId::new("w_b", format!("{w}_{b}")), &cfg, |bench, cfg| {
            bench.iter(|| estimate_offset(black_box(&r1), black_box(&r2), cfg).unwrap())
        });
    }
    group.finish();
}

fn bench_interpolate(c: &mut Criterion) {
    let win = MagnitudeWindow::new(series(100, 0.0), 99).unwrap();
    c.bench_function("interpolate_w100_b10", |b| {
        b.iter(|| interpolate(black_box(&win), 10).unwrap())
    });
}

criterion_group!(benches, bench_estimate, bench_interpolate);
criterion_main!(benches);
