use std::f64::consts::PI;

use atomfield_bench::spectroscopy_trace;
use atomfield_core::{circle_fit, remove_background, simulate, sweep_n, Modulation, WorkingPoint};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn simulation(c: &mut Criterion) {
    let wp = WorkingPoint::table_one();
    let plain = wp.simulation(Modulation::None).unwrap();
    let square = wp.simulation(Modulation::square(50, PI)).unwrap();
    c.bench_function("simulate/unmodulated", |b| b.iter(|| simulate(black_box(&plain)).unwrap()));
    c.bench_function("simulate/square_n50", |b| b.iter(|| simulate(black_box(&square)).unwrap()));
}

fn sweep(c: &mut Criterion) {
    let wp = WorkingPoint::table_one();
    let ns: Vec<u32> = (0..=10).collect();
    let mut g = c.benchmark_group("sweep");
    g.sample_size(20);
    g.bench_function("n_0_to_10", |b| b.iter(|| sweep_n(black_box(&wp), &ns, PI).unwrap()));
    g.finish();
}

fn calibration(c: &mut Criterion) {
    let trace = spectroscopy_trace(1);
    c.bench_function("calibration/background_and_circle", |b| {
        b.iter(|| {
            let removed = remove_background(black_box(&trace)).unwrap();
            circle_fit(&removed.r, &trace.detunings).unwrap()
        })
    });
}

criterion_group!(benches, simulation, sweep, calibration);
criterion_main!(benches);
