use criterion::{criterion_group, criterion_main, Criterion};
use geodss_bench::Fixture;
use geodss_core::em::simulate;
use geodss_core::enkf::assimilate;
use geodss_core::optimizer::{robust_decision, solve_realization};
use std::hint::black_box;

fn forward(c: &mut Criterion) {
    let f = Fixture::new(2);
    c.bench_function("forward_simulation", |b| {
        b.iter(|| simulate(black_box(&f.truth), black_box(f.station), &f.config.tool).unwrap())
    });
}

fn assimilation(c: &mut Criterion) {
    let f = Fixture::new(100);
    c.bench_function("assimilate_100_members", |b| {
        b.iter(|| assimilate(black_box(&f.ensemble), f.station, &f.observation, &f.config.tool, 7).unwrap())
    });
}

fn dp(c: &mut Criterion) {
    let f = Fixture::new(2);
    c.bench_function("dp_solve_one_member", |b| {
        b.iter(|| solve_realization(&f.grid, black_box(&f.ensemble.members[0]), &f.value_fn, 1.0, f.bit).unwrap())
    });
}

fn robust(c: &mut Criterion) {
    let f = Fixture::new(100);
    let mut g = c.benchmark_group("robust");
    g.sample_size(10);
    g.bench_function("robust_decision_100_members", |b| {
        b.iter(|| robust_decision(&f.grid, black_box(&f.ensemble), &f.value_fn, 1.0, f.bit).unwrap())
    });
    g.finish();
}

criterion_group!(benches, forward, assimilation, dp, robust);
criterion_main!(benches);
