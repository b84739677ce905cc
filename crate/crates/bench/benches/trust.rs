use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use fedtrust::sim::{local_train, TrainParams};
use fedtrust::{aggregate, assess_device, build_tree, run_matching, DeviceId};
use fedtrust_bench::{belief_masses, matching_input, training_input, trust_input};

fn matching(c: &mut Criterion) {
    let mut g = c.benchmark_group("run_matching");
    for &(devices, servers) in &[(20, 2), (200, 10), (1000, 20)] {
        let input = matching_input(devices, servers, 1);
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("{devices}x{servers}")),
            &input,
            |b, m| b.iter(|| run_matching(&m.devices, &m.servers, &m.quotas).unwrap()),
        );
    }
    g.finish();
}

fn dst(c: &mut Criterion) {
    let mut g = c.benchmark_group("aggregate");
    for n in [4, 16, 64] {
        let masses = belief_masses(n, 2);
        g.bench_with_input(BenchmarkId::from_parameter(n), &masses, |b, m| {
            b.iter(|| aggregate(black_box(m)).unwrap())
        });
    }
    g.finish();
}

fn resource_trust(c: &mut Criterion) {
    let mut g = c.benchmark_group("assess_device");
    for n in [20, 200, 2000] {
        let (fences, traces) = trust_input(n, 3);
        g.bench_with_input(BenchmarkId::from_parameter(n), &traces, |b, t| {
            b.iter(|| assess_device(DeviceId(0), black_box(t), &fences))
        });
    }
    g.finish();
}

fn tree(c: &mut Criterion) {
    let history = fedtrust::recommender_tree::worked_example_history();
    c.bench_function("build_tree/worked_example", |b| {
        b.iter(|| build_tree(black_box(&history)).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let (data, profile, weights) = training_input(200, 784, 10, 4);
    let params = TrainParams::default();
    c.bench_function("local_train/200x784", |b| {
        b.iter(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            local_train(&weights, &data, &profile, &params, &mut rng).unwrap()
        })
    });
}

criterion_group!(benches, matching, dst, resource_trust, tree, training);
criterion_main!(benches);
