use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use phar_core::extract::{derive_rule, PerturbationSpec};
use phar_core::fuse::lasso::{solve, LassoProblem, SolverOptions};
use phar_core::predict::{Classifier, NearestCentroid};
use phar_core::stats::wilcoxon;
use phar_core::synth::sine_dataset;
use phar_core::FeatureId;

fn bench_derive_rule(c: &mut Criterion) {
    let ds = sine_dataset(1);
    let pred = NearestCentroid::fit(&ds).unwrap();
    let n = ds.test_indices()[0];
    let class = pred.predict_one(ds.instance(n)).unwrap();
    let features: Vec<FeatureId> = (4..8).map(|t| FeatureId::new(t, 0)).collect();
    let spec = PerturbationSpec {
        deltas: vec![0.2; ds.feature_count()],
        samples: 2000,
        seed: 3,
    };
    c.bench_function("derive_rule_4_features_2000_samples", |b| {
        b.iter(|| derive_rule(n, black_box(&features), class, &ds, &pred, &spec, 0.01).unwrap())
    });
}

fn bench_lasso(c: &mut Criterion) {
    let rows = 200;
    let cols = 30;
    let columns: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..rows).map(|i| f64::from(u8::from((i * (j + 3)) % 7 < 3))).collect())
        .collect();
    let y: Vec<f64> = (0..rows).map(|i| f64::from(u8::from(i % 7 < 3))).collect();
    let problem = LassoProblem::with_intercept(y, columns);
    let lambda = 0.01 * problem.lambda_max();
    c.bench_function("lasso_200x30", |b| {
        b.iter(|| solve(black_box(&problem), lambda, &SolverOptions::default()))
    });
}

fn bench_wilcoxon(c: &mut Criterion) {
    let a: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37).sin()).collect();
    let b: Vec<f64> = (0..15).map(|i| (i as f64 * 0.53).cos()).collect();
    c.bench_function("wilcoxon_exact_15", |bench| {
        bench.iter(|| wilcoxon(black_box(&a), black_box(&b)).unwrap())
    });
}

criterion_group!(benches, bench_derive_rule, bench_lasso, bench_wilcoxon);
criterion_main!(benches);
