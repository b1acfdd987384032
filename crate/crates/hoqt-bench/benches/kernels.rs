use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hoqt::choi::{choi_of_isometry, link_product, CombClass};
use hoqt::compressor::build_psi;
use hoqt::protocols::{run_isometry_inversion_full, run_transposition_pbt};
use hoqt::rep::schur_data;
use hoqt::sdp::{build_task_sdp, isometry_span_basis, solve_sdp, SolverOptions};
use hoqt::tensor::haar_isometry;
use hoqt::{RandomSource, Task};

fn tensor_kernels(c: &mut Criterion) {
    let mut rng = RandomSource::new(1);
    let v = haar_isometry(2, 4, &mut rng).unwrap();
    let w = haar_isometry(4, 4, &mut rng).unwrap().relabel(&[("in", "out"), ("out", "out2")]).unwrap();
    let jv = choi_of_isometry(&v).unwrap();
    let jw = choi_of_isometry(&w).unwrap();
    c.bench_function("link_product 2->4->4", |b| b.iter(|| link_product(black_box(jv.op()), black_box(jw.op())).unwrap()));
    c.bench_function("schur_data d=3 k=4", |b| b.iter(|| schur_data(black_box(3), black_box(4)).unwrap()));
    c.bench_function("build_psi d=2 D=3 n=3", |b| b.iter(|| build_psi(2, 3, 3).unwrap()));
}

fn protocols(c: &mut Criterion) {
    let v = haar_isometry(2, 3, &mut RandomSource::new(2)).unwrap();
    c.bench_function("isometry inversion k=2", |b| b.iter(|| run_isometry_inversion_full(black_box(&v), 2).unwrap()));
    c.bench_function("transposition k=2", |b| b.iter(|| run_transposition_pbt(black_box(&v), 2).unwrap()));
}

fn sdp(c: &mut Criterion) {
    let mut group = c.benchmark_group("sdp");
    group.sample_size(10);
    group.bench_function("span basis d=2 D=3 n=2", |b| {
        b.iter(|| isometry_span_basis(2, 3, 2, &mut RandomSource::new(3)).unwrap())
    });
    let basis = isometry_span_basis(2, 3, 3, &mut RandomSource::new(3)).unwrap();
    let problem = build_task_sdp(Task::Inversion, 2, 3, 2, CombClass::Sequential, &basis).unwrap();
    group.bench_function("solve inversion (2,3,2) sequential", |b| {
        b.iter(|| solve_sdp(black_box(&problem), &SolverOptions::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, tensor_kernels, protocols, sdp);
criterion_main!(benches);
