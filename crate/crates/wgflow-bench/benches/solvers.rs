//! Criterion benchmarks for the hot paths: one particle step, one
//! finite-volume step, the exact small-N assignment distance, and the 1D
//! quantile distance.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use wgflow::energy::{CouplingFamily, EnergySpec, KernelFamily, Mode, PotentialFamily};
use wgflow::fv_solver::{fv_step, FvState};
use wgflow::measures::{sample_gaussian, GridDensity, Measure};
use wgflow::ot_metrics::{w2_1d, w2_assignment};
use wgflow::particle_sim::{step, SimState, StepConfig};

fn quadratic_spec() -> EnergySpec {
    EnergySpec {
        mode: Mode::Competitive,
        coupling: CouplingFamily::Bilinear {
            b: nalgebra_matrix(1.0),
        },
        v1: PotentialFamily::Quadratic { center: vec![0.0], curvature: nalgebra_matrix(1.0) },
        v2: PotentialFamily::Quadratic { center: vec![0.0], curvature: nalgebra_matrix(1.0) },
        w1: KernelFamily::Zero,
        w2: KernelFamily::Zero,
        alpha: 0.05,
        beta: 0.05,
        dim_rho: 1,
        dim_mu: 1,
        application_extras: None,
    }
}

fn nalgebra_matrix(v: f64) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(1, 1, &[v])
}

fn bench_particle_step(c: &mut Criterion) {
    let spec = quadratic_spec();
    let rho = sample_gaussian(&[2.0], &[0.25], 1024, 1).unwrap();
    let mu = Measure::Particles(sample_gaussian(&[-2.0], &[0.25], 1024, 2).unwrap());
    let state = SimState::new(rho, mu, 3).unwrap();
    c.bench_function("particle_step_1024", |b| {
        b.iter(|| step(&spec, black_box(&state), StepConfig::plain(1e-3)).unwrap())
    });
}

fn bench_fv_step(c: &mut Criterion) {
    let spec = quadratic_spec();
    let rho = GridDensity::gaussian(2.0, 0.25, -6.0, 6.0, 300).unwrap();
    let mu = Measure::Grid(GridDensity::gaussian(-2.0, 0.25, -6.0, 6.0, 300).unwrap());
    let state = FvState::new(rho, mu).unwrap();
    c.bench_function("fv_step_300", |b| {
        b.iter(|| fv_step(&spec, black_box(&state), 1e-3).unwrap())
    });
}

fn bench_w2(c: &mut Criterion) {
    let a = sample_gaussian(&[0.0, 0.0], &[1.0, 1.0], 8, 4).unwrap();
    let b2 = sample_gaussian(&[1.0, 0.5], &[1.0, 1.0], 8, 5).unwrap();
    c.bench_function("w2_assignment_8x8_2d", |b| {
        b.iter(|| w2_assignment(black_box(&a), black_box(&b2)).unwrap())
    });
    let p = Measure::Particles(sample_gaussian(&[0.0], &[1.0], 4096, 6).unwrap());
    let q = Measure::Particles(sample_gaussian(&[1.0], &[1.0], 4096, 7).unwrap());
    c.bench_function("w2_1d_4096", |b| {
        b.iter(|| w2_1d(black_box(&p), black_box(&q)).unwrap())
    });
}

criterion_group!(benches, bench_particle_step, bench_fv_step, bench_w2);
criterion_main!(benches);
