//! Hot-path benchmarks: model-map evaluation, one relaxation sweep,
//! tension assembly, and the Mazur distance field.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use instanton_core::diagnostics::mazur_field;
use instanton_core::grid::{HalfPlaneGrid, PhiField};
use instanton_core::model_map::{model_map_eval, AsymptoticClass, ModelMapSpec};
use instanton_core::solver::{discrete_tension, relax_step, stability_step};
use instanton_core::{RodStructure, RodVector};

fn bolt_spec() -> ModelMapSpec {
    let vectors = [(0, 1), (1, 0), (1, 1)]
        .into_iter()
        .map(|(a, b)| RodVector { a, b })
        .collect();
    let rs = RodStructure::new(vec![0.0, 1.5], vectors).unwrap();
    ModelMapSpec::new(&rs, AsymptoticClass::Alf { n: 1.0 }).unwrap()
}

fn bench_model_map_eval(c: &mut Criterion) {
    let spec = bolt_spec();
    let grid = HalfPlaneGrid::from_spec(&spec, 64, 128);
    c.bench_function("model_map_eval_64x128", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for k in 0..grid.n_z {
                for j in 0..grid.n_rho {
                    let g = model_map_eval(&spec, grid.rho(j), grid.z(k)).unwrap();
                    acc += g.g[(0, 0)];
                }
            }
            black_box(acc)
        })
    });
}

fn bench_relax_sweep(c: &mut Criterion) {
    let spec = bolt_spec();
    let grid = HalfPlaneGrid::from_spec(&spec, 128, 256);
    let phi = PhiField::from_model_map(&grid, &spec).unwrap();
    let step = stability_step(&grid);
    c.bench_function("relax_sweep_128x256", |b| {
        b.iter(|| black_box(relax_step(&phi, &grid, step).unwrap()))
    });
}

fn bench_discrete_tension(c: &mut Criterion) {
    let spec = bolt_spec();
    let grid = HalfPlaneGrid::from_spec(&spec, 128, 256);
    let phi = PhiField::from_model_map(&grid, &spec).unwrap();
    c.bench_function("discrete_tension_128x256", |b| {
        b.iter(|| black_box(discrete_tension(&phi, &grid).unwrap().sup_tau()))
    });
}

fn bench_mazur_field(c: &mut Criterion) {
    let spec = bolt_spec();
    let grid = HalfPlaneGrid::from_spec(&spec, 128, 256);
    let phi = PhiField::from_model_map(&grid, &spec).unwrap();
    let other = relax_step(&phi, &grid, stability_step(&grid)).unwrap();
    c.bench_function("mazur_field_128x256", |b| {
        b.iter(|| black_box(mazur_field(&phi, &other, &grid).unwrap().1))
    });
}

criterion_group!(
    benches,
    bench_model_map_eval,
    bench_relax_sweep,
    bench_discrete_tension,
    bench_mazur_field
);
criterion_main!(benches);
