use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fallimpact_bench::fixture;
use fallimpact_core::eval::roc_curve;
use fallimpact_core::featsel::rank_features;
use fallimpact_core::signal::{label_impacts, segment_events, smv_series};
use fallimpact_core::synth::{gen_dataset, SMV_AXES};
use fallimpact_core::trees::ForestConfig;
use fallimpact_core::{fit_model, DatasetSpec, DetectorConfig, ModelKind};

fn signal(c: &mut Criterion) {
    let f = fixture(5);
    let cfg = DetectorConfig::default();
    c.bench_function("smv_series", |b| {
        b.iter(|| smv_series(black_box(&f.raw), SMV_AXES).unwrap())
    });
    let series = smv_series(&f.raw, SMV_AXES).unwrap();
    c.bench_function("label_and_segment", |b| {
        b.iter(|| {
            let l = label_impacts(black_box(&f.raw), &series, &cfg).unwrap();
            (l, segment_events(&series, &cfg))
        })
    });
    c.bench_function("gen_dataset", |b| {
        b.iter(|| gen_dataset(black_box(&DatasetSpec::default())).unwrap())
    });
}

fn models(c: &mut Criterion) {
    let f = fixture(5);
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    for kind in ModelKind::ALL {
        let config = kind.default_config();
        group.bench_with_input(BenchmarkId::from_parameter(kind), &config, |b, cfg| {
            b.iter(|| fit_model(black_box(&f.x), black_box(&f.y), cfg, 0).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("predict_test");
    for kind in ModelKind::ALL {
        let model = fit_model(&f.x, &f.y, &kind.default_config(), 0).unwrap();
        group.bench_function(BenchmarkId::from_parameter(kind), |b| {
            b.iter(|| model.predict_all(black_box(&f.test_x)).unwrap())
        });
    }
    group.finish();

    let model = fit_model(&f.x, &f.y, &ModelKind::Gboost.default_config(), 0).unwrap();
    let scores: Vec<f64> = f
        .test_x
        .iter()
        .map(|r| model.decision_score(r).unwrap())
        .collect();
    c.bench_function("roc_curve", |b| {
        b.iter(|| roc_curve(black_box(&f.test_y), black_box(&scores)).unwrap())
    });
}

fn ranking(c: &mut Criterion) {
    let f = fixture(5);
    let mut group = c.benchmark_group("rank_features");
    group.sample_size(10);
    for parallel in [false, true] {
        let cfg = ForestConfig {
            parallel,
            ..ForestConfig::default()
        };
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_function(label, |b| {
            b.iter(|| rank_features(black_box(&f.train), &cfg, 0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, signal, models, ranking);
criterion_main!(benches);
