use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use sdrelax::approximation::approximate;
use sdrelax::cell_problems::{solve_H, solve_h_supercritical, CellProblemSpec};
use sdrelax::densities::{BulkDensity, NonlinearDensity, SurfaceDensity};
use sdrelax::fields::{BrokenField, CellData, Mesh};
use sdrelax::linearization::{recovery_sequence, NonsimpleConfig, RecoveryOptions};
use sdrelax::relaxation::StructuredDeformation;
use sdrelax::{Mat, Vector};

fn mixed_1d() -> StructuredDeformation {
    let mesh = Arc::new(Mesh::unit(1, 2).unwrap());
    let g = BrokenField::from_fn(mesh, |c, x| {
        CellData::affine(Vector::scalar(0.5 * x.get(0) + c as f64), Mat::scalar(0.5))
    })
    .unwrap();
    StructuredDeformation::new(g, vec![Mat::scalar(0.25), Mat::scalar(-0.25)], 2.0).unwrap()
}

fn cell_problems(c: &mut Criterion) {
    let bulk =
        CellProblemSpec::bulk(BulkDensity::w2(1), SurfaceDensity::psi1(1), 2.0, Mat::scalar(3.0), Mat::scalar(1.0));
    c.bench_function("solve_H 1D W2 n=64", |b| b.iter(|| solve_H(black_box(&bulk)).unwrap()));
    let w1 =
        CellProblemSpec::bulk(BulkDensity::w1abs(1), SurfaceDensity::psi1(1), 2.0, Mat::scalar(-2.0), Mat::scalar(1.0));
    c.bench_function("solve_H 1D W1abs n=64", |b| b.iter(|| solve_H(black_box(&w1)).unwrap()));
    let surf = CellProblemSpec::surface(
        BulkDensity::w2(2),
        SurfaceDensity::psi_aniso(2, 0.5).unwrap(),
        2.0,
        Vector::new2(0.3, -0.7),
        Vector::new2(0.6, 0.8),
    )
    .with_n(6);
    c.bench_function("solve_h 2D PSI_aniso n=6", |b| b.iter(|| solve_h_supercritical(black_box(&surf)).unwrap()));
}

fn constructions(c: &mut Criterion) {
    let sd = mixed_1d();
    c.bench_function("approximate 1D n=256", |b| b.iter(|| approximate(black_box(&sd), 256).unwrap()));
    let cfg = NonsimpleConfig::new(
        1e-3,
        0.7,
        0.68,
        NonlinearDensity::v_dw(),
        SurfaceDensity::psi1(1),
        SurfaceDensity::psi1_matrix(1),
    )
    .unwrap();
    c.bench_function("recovery_sequence 1D delta=1e-3", |b| {
        b.iter(|| recovery_sequence(black_box(&sd), &[1e-3], &cfg, &RecoveryOptions::default()).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = cell_problems, constructions
}
criterion_main!(benches);
