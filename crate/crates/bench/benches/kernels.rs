use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use tactica::{integrate_repdyn, simulate, weyl_eval, NcPoly};
use tactica_bench::{dense_tuple, heisenberg_spec, oscillator};

fn weyl(c: &mut Criterion) {
    let xs = dense_tuple();
    let poly = NcPoly::parse("x1 x2 x3 + x1^2 x2 - 0.5 x3 x3 x1").unwrap();
    c.bench_function("weyl_eval degree 3", |b| b.iter(|| weyl_eval(black_box(&poly), &xs, &[]).unwrap()));
}

fn integrate(c: &mut Criterion) {
    let system = oscillator();
    c.bench_function("simulate 1000 steps", |b| {
        b.iter(|| simulate(black_box(&system), None, 0.0, 10.0, 0.01).unwrap())
    });
}

fn project(c: &mut Criterion) {
    let spec = heisenberg_spec();
    c.bench_function("repdyn 1000 projected steps", |b| {
        b.iter(|| integrate_repdyn(black_box(&spec), 0.0, 1.0, 1e-3).unwrap())
    });
}

criterion_group!(benches, weyl, integrate, project);
criterion_main!(benches);
