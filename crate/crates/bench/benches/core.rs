use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use edln_core::data::make_data_model;
use edln_core::metrics::{pairwise_alignment, sharpness, Probe};
use edln_core::objective::Objective;
use edln_core::theory::{closed_form_platonic, Architecture};
use edln_core::trainer::{train, Algorithm, TrainConfig};

fn objective(c: &mut Criterion) {
    let dm = make_data_model(8, 6, 4, 10.0, 10.0, 1).unwrap();
    let net = Architecture::random(8, &[8, 8], 6, 10.0, 2).init(1.0, 3).unwrap();
    let obj = Objective::analytic(&dm, "A").unwrap();
    c.bench_function("loss_gradient_d3", |b| b.iter(|| obj.loss_gradient(black_box(&net)).unwrap()));
    c.bench_function("entropy_d3", |b| b.iter(|| obj.entropy(black_box(&net)).unwrap()));
    c.bench_function("entropy_gradient_d3", |b| b.iter(|| obj.entropy_gradient(black_box(&net)).unwrap()));
}

fn closed_form(c: &mut Criterion) {
    let dm = make_data_model(8, 6, 4, 10.0, 10.0, 1).unwrap();
    let arch = Architecture::random(8, &[10, 10, 10], 6, 10.0, 2);
    c.bench_function("closed_form_d4", |b| b.iter(|| closed_form_platonic(black_box(&dm), "A", &arch, Some(0)).unwrap()));
}

fn metrics(c: &mut Criterion) {
    let dm = make_data_model(8, 6, 4, 10.0, 10.0, 1).unwrap();
    let a = closed_form_platonic(&dm, "A", &Architecture::random(8, &[6, 6], 6, 10.0, 2), None).unwrap().network;
    let b = closed_form_platonic(&dm, "B", &Architecture::random(8, &[10, 10, 10], 6, 10.0, 3), None).unwrap().network;
    let probes = dm.sample_batch(64, &["A", "B"], 4).unwrap();
    c.bench_function("pairwise_alignment_2x3", |bch| {
        bch.iter(|| pairwise_alignment(Probe::new(&a, "A"), Probe::new(&b, "B"), black_box(&probes)).unwrap())
    });
    let obj = Objective::analytic(&dm, "A").unwrap();
    c.bench_function("sharpness_d3", |bch| bch.iter(|| sharpness(black_box(&a), &obj, 1e-6, 500).unwrap()));
}

fn training(c: &mut Criterion) {
    let dm = make_data_model(8, 6, 4, 10.0, 10.0, 1).unwrap();
    let init = Architecture::random(8, &[6], 6, 10.0, 2).init(1.0, 3).unwrap();
    let sgd = TrainConfig { algorithm: Algorithm::Sgd, learning_rate: 1e-3, steps: 1000, record_every: 1000, ..Default::default() };
    c.bench_function("sgd_1000_steps", |b| b.iter(|| train(black_box(&init), &dm, "A", &sgd).unwrap()));
    let constrained = TrainConfig { algorithm: Algorithm::EntropicConstrained, steps: 100, record_every: 100, ..Default::default() };
    let mut group = c.benchmark_group("constrained");
    group.sample_size(10);
    group.bench_function("entropic_constrained_100_steps", |b| b.iter(|| train(black_box(&init), &dm, "A", &constrained).unwrap()));
    group.finish();
}

criterion_group!(benches, objective, closed_form, metrics, training);
criterion_main!(benches);
