use criterion::{black_box, criterion_group, criterion_main, Criterion};
use mcgtta_bench::{adaptation_fixture, clip};
use mcgtta_core::tta::{backward_batch, forward_batch, run};
use mcgtta_core::{compute_mel, make_views, AugmentConfig, MelConfig};

fn frontend(c: &mut Criterion) {
    let w = clip();
    let cfg = MelConfig::default();
    c.bench_function("log-mel 1s clip", |b| b.iter(|| compute_mel(black_box(&w), &cfg).unwrap()));
    let m = compute_mel(&w, &cfg).unwrap();
    c.bench_function("8 views", |b| b.iter(|| make_views(black_box(&m), &AugmentConfig::default()).unwrap()));
}

fn adaptation(c: &mut Criterion) {
    let (model, state, views, exp) = adaptation_fixture(5);
    c.bench_function("forward B=5 M=8", |b| {
        b.iter(|| forward_batch(&model, &state, &exp.adapt, black_box(&views)).unwrap())
    });
    let fwd = forward_batch(&model, &state, &exp.adapt, &views).unwrap();
    c.bench_function("backward B=5 M=8", |b| {
        b.iter(|| backward_batch(&model, &state, &exp.adapt, black_box(&fwd)).unwrap())
    });
    c.bench_function("episodic step B=5 M=8", |b| {
        b.iter(|| run(&model, &state, black_box(&views), &exp.adapt).unwrap())
    });
}

criterion_group!(benches, frontend, adaptation);
criterion_main!(benches);
