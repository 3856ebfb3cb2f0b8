use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use starfd_bench::{instance, mlp, small_ms};
use starfd_core::harness::{parse_config, run_plan, RunOptions};
use starfd_core::optim::phase_cd_reflect;
use starfd_core::{alternating_optimize, enumerate_oracle, evaluate, AltOptions, Objective, StarMode};

fn link_model(c: &mut Criterion) {
    let mut g = c.benchmark_group("evaluate");
    for m in [16, 64] {
        let i = instance(m, StarMode::Es, 1);
        g.bench_with_input(BenchmarkId::from_parameter(m), &i, |b, i| {
            b.iter(|| evaluate(&i.spec, &i.ch, black_box(&i.cfg), &i.link).unwrap())
        });
    }
    g.finish();
}

fn optimizers(c: &mut Criterion) {
    let minsi = Objective::MinSiSubjectToRate { r_min: 2.0 };
    let mut g = c.benchmark_group("phase_cd_reflect");
    for m in [16, 64] {
        let i = instance(m, StarMode::Es, 2);
        g.bench_with_input(BenchmarkId::from_parameter(m), &i, |b, i| {
            b.iter(|| phase_cd_reflect(&i.ch, black_box(&i.cfg), &i.link, 2).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("alternating_optimize");
    g.sample_size(10);
    for m in [16, 64] {
        let i = instance(m, StarMode::Es, 3);
        g.bench_with_input(BenchmarkId::from_parameter(m), &i, |b, i| {
            b.iter(|| alternating_optimize(&i.spec, &i.ch, minsi, &AltOptions::default()).unwrap())
        });
    }
    g.finish();

    let s = small_ms(4);
    let obj = Objective::MaxRateSubjectToSi { epsilon_db: 20.0 };
    c.bench_function("enumerate_oracle/M3_L2", |b| {
        b.iter(|| enumerate_oracle(&s.spec, &s.ch, black_box(obj)).unwrap())
    });
}

fn network(c: &mut Criterion) {
    let net = mlp(&[132, 128, 128, 19], 5);
    let x: Vec<f64> = (0..132).map(|i| (i as f64 * 0.37).sin()).collect();
    let up = vec![1.0; 19];
    c.bench_function("mlp/forward", |b| b.iter(|| net.forward(black_box(&x))));
    c.bench_function("mlp/grad", |b| b.iter(|| net.grad(black_box(&x), &up)));
}

fn harness(c: &mut Criterion) {
    let plan = parse_config("name = b\nvalues = 8, 16\ntrials = 4\nmethods = random, alternating\n").unwrap();
    let mut g = c.benchmark_group("run_plan");
    g.sample_size(10);
    g.bench_function("2x4x2", |b| {
        b.iter(|| run_plan(&plan, 0, RunOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, link_model, optimizers, network, harness);
criterion_main!(benches);
