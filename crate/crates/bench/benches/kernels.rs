use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedbrain_bench::{linear_dataset, paired_differences, uniform_vector};
use fedbrain_core::federation::{aggregate_fedavg, ClientUpdate};
use fedbrain_core::model::{
    expand_polynomial, train_epoch, LrSchedule, ModelParams, Optimizer, OptimizerState, TrainConfig,
};
use fedbrain_core::stats::wilcoxon_signed_rank;

fn sgd_epoch(c: &mut Criterion) {
    let mut group = c.benchmark_group("sgd_epoch");
    for d in [32, 560, 1560] {
        let data = linear_dataset(650, d, 1);
        let cfg = TrainConfig {
            epochs: 100,
            batch_size: 8,
            l2_penalty: 1e-4,
            schedule: LrSchedule::InverseScaling {
                eta0: 0.01,
                power: 0.5,
                horizon: 100,
            },
            optimizer: Optimizer::Sgd,
            seed: 7,
            intercept_init: 60.0,
        };
        group.bench_with_input(BenchmarkId::from_parameter(d), &data, |b, data| {
            b.iter(|| {
                let mut params = ModelParams::linear(d, 60.0);
                let mut state = OptimizerState::new(Optimizer::Sgd, params.len());
                train_epoch(&mut params, data, &cfg, 1, 7, &mut state).unwrap();
                black_box(params)
            })
        });
    }
    group.finish();
}

fn fedavg(c: &mut Criterion) {
    let mut group = c.benchmark_group("fedavg");
    for d in [32, 560, 1560] {
        let updates: Vec<ClientUpdate> = (0..16u32)
            .map(|k| ClientUpdate {
                client_id: k + 1,
                sample_count: 20 + 40 * k as usize,
                params: ModelParams {
                    weights: uniform_vector(d, k as u64),
                    intercept: 60.0 + k as f64,
                    layer_shapes: Vec::new(),
                },
                loss: 0.0,
            })
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(d), &updates, |b, u| {
            b.iter(|| black_box(aggregate_fedavg(u).unwrap()))
        });
    }
    group.finish();
}

fn wilcoxon(c: &mut Criterion) {
    let mut group = c.benchmark_group("wilcoxon");
    for n in [12, 25, 1000] {
        let diffs = paired_differences(n, 3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &diffs, |b, d| {
            b.iter(|| black_box(wilcoxon_signed_rank(d).unwrap()))
        });
    }
    group.finish();
}

fn polynomial(c: &mut Criterion) {
    let x = uniform_vector(32, 5);
    c.bench_function("polynomial_32_to_560", |b| {
        b.iter(|| black_box(expand_polynomial(black_box(&x), 2).unwrap()))
    });
}

criterion_group!(benches, sgd_epoch, fedavg, wilcoxon, polynomial);
criterion_main!(benches);
