use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use knoblab::explain::{counterfactual, forward_sweep, CounterfactualConfig, Objective};
use knoblab::regressor::RegressorModel;
use knoblab::synth::{render, render_with_jacobian, DEFAULT_PARTICLE_COUNT};
use knoblab::{AttributeVector, ParticleLayout};

fn attrs() -> AttributeVector {
    AttributeVector::new(0.4, 0.3, 0.6, 0.5).unwrap()
}

fn rendering(c: &mut Criterion) {
    let layout = ParticleLayout::from_seed(3, DEFAULT_PARTICLE_COUNT);
    let mut group = c.benchmark_group("render");
    for res in [32, 64, 128] {
        group.bench_with_input(BenchmarkId::new("image", res), &res, |b, &res| {
            b.iter(|| render(&layout, black_box(&attrs()), res).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("with_jacobian", res), &res, |b, &res| {
            b.iter(|| render_with_jacobian(&layout, black_box(&attrs()), res).unwrap())
        });
    }
    group.finish();
}

fn regressor(c: &mut Criterion) {
    let model = RegressorModel::init(64, 1).unwrap();
    let image = render(&ParticleLayout::from_seed(3, DEFAULT_PARTICLE_COUNT), &attrs(), 64).unwrap();
    c.bench_function("predict_64", |b| b.iter(|| model.predict(black_box(&image)).unwrap()));
    let grid: Vec<f64> = (0..9).map(|i| 0.1 + 0.1 * i as f64).collect();
    c.bench_function("sweep_9_points", |b| b.iter(|| forward_sweep(&model, 3, &attrs(), 2, &grid).unwrap()));
}

fn explanation(c: &mut Criterion) {
    let model = RegressorModel::init(64, 1).unwrap();
    let cfg = CounterfactualConfig::default();
    let objective = Objective::new(&model, 3, &attrs(), 150.0, &cfg).unwrap();
    let probe = AttributeVector::new(0.45, 0.3, 0.55, 0.5).unwrap();
    c.bench_function("objective_gradient_64", |b| b.iter(|| objective.evaluate(black_box(&probe)).unwrap()));

    let mut group = c.benchmark_group("counterfactual");
    group.sample_size(10);
    let short = CounterfactualConfig { max_iters: 20, ..cfg };
    group.bench_function("20_iterations_64", |b| b.iter(|| counterfactual(&model, 3, &attrs(), 150.0, &short).unwrap()));
    group.finish();
}

criterion_group!(benches, rendering, regressor, explanation);
criterion_main!(benches);
