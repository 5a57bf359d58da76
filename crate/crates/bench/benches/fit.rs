use boulevard::boosting::{boulevard_fit, gbt_fit, rf_fit, Ensemble};
use boulevard::StructureMode;
use boulevard_bench::{config, constraints, sample};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn boulevard(c: &mut Criterion) {
    let mut group = c.benchmark_group("boulevard_fit");
    group.sample_size(10);
    for n in [500usize, 2000] {
        let data = sample(n, 7);
        for (name, mode, leaf) in [
            ("rblv", StructureMode::Randomized, 13),
            ("blv", StructureMode::Adaptive, 10),
        ] {
            let cfg = config(mode, 50, leaf);
            group.bench_with_input(BenchmarkId::new(name, n), &data, |b, d| {
                b.iter(|| boulevard_fit(d.x.view(), black_box(&d.y), &cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn baselines(c: &mut Criterion) {
    let mut group = c.benchmark_group("baselines");
    group.sample_size(10);
    let data = sample(1000, 8);
    group.bench_function("gbt", |b| {
        b.iter(|| {
            gbt_fit(
                data.x.view(),
                black_box(&data.y),
                0.1,
                50,
                &constraints(10),
                None,
                1,
            )
            .unwrap()
        })
    });
    group.bench_function("sgbt", |b| {
        b.iter(|| {
            gbt_fit(
                data.x.view(),
                black_box(&data.y),
                0.1,
                50,
                &constraints(10),
                Some(0.8),
                1,
            )
            .unwrap()
        })
    });
    group.bench_function("rf", |b| {
        b.iter(|| {
            rf_fit(
                data.x.view(),
                black_box(&data.y),
                50,
                &constraints(13),
                0.8,
                1,
            )
            .unwrap()
        })
    });
    group.finish();
}

fn prediction(c: &mut Criterion) {
    let data = sample(1000, 9);
    let model = boulevard_fit(
        data.x.view(),
        &data.y,
        &config(StructureMode::Randomized, 200, 13),
    )
    .unwrap();
    c.bench_function("predict_1000x200", |b| {
        b.iter(|| model.predict_rows(black_box(data.x.view())).unwrap())
    });
}

criterion_group!(benches, boulevard, baselines, prediction);
criterion_main!(benches);
