use criterion::{black_box, criterion_group, criterion_main, Criterion};
use multicurve::estimator::instrument_gram;
use multicurve::experiments::{masking_experiment, MaskingConfig};
use multicurve::prelude::*;
use multicurve_bench::{cross_section, estimator};

fn gram(c: &mut Criterion) {
    let cfm = cross_section(0);
    let cfg = estimator(1e-2);
    let scalar = *cfg.kernel.scalar();
    c.bench_function("instrument_gram", |b| b.iter(|| instrument_gram(black_box(&cfm), &scalar)));
}

fn fit(c: &mut Criterion) {
    let cfm = cross_section(0);
    let cfg = estimator(1e-2);
    c.bench_function("solve", |b| b.iter(|| solve(black_box(&cfm), &cfg).unwrap()));
}

fn bands(c: &mut Criterion) {
    let cfm = cross_section(0);
    let post = posterior(&cfm, &estimator(1e-2), &NoiseSpec::Ridge).unwrap().fitted().unwrap();
    let zs: Vec<f64> = (0..=200).map(|i| i as f64 * 0.25).collect();
    c.bench_function("confidence_bands", |b| {
        b.iter(|| post.confidence_bands(0, black_box(&zs), 3.0, Some(0.02)).unwrap())
    });
}

fn masking(c: &mut Criterion) {
    let cfm = cross_section(0);
    let cfg = MaskingConfig::default();
    let mut group = c.benchmark_group("masking");
    group.sample_size(10);
    group.bench_function("one_date", |b| b.iter(|| masking_experiment("d", black_box(&cfm), &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, gram, fit, bands, masking);
criterion_main!(benches);
