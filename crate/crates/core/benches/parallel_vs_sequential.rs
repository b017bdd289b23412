//! Rayon-backed kernels against their sequential fallback.
//!
//! Run with `cargo bench -p sphquad`. Without the `parallel` feature both
//! variants take the sequential path.

use std::f64::consts::PI;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use sphquad::bench::{error_sweep, HgIntegrand};
use sphquad::construct::{verify_exactness, MomentSystem, OrbitParam};
use sphquad::icosahedral::OrbitType;
use sphquad::rte::{build_phase_matrix, Grid, Material, ProblemOptions, RteField, RteProblem, Source, SweepMode, Sweeper};
use sphquad::rules::{product_gauss_legendre, product_trapezoid};
use sphquad::Exec;

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn moment_system(c: &mut Criterion) {
    let mut params = vec![OrbitParam::fixed(OrbitType::Vertex, 0.02)];
    for i in 0..20 {
        let t = 0.1 + 2.9 * i as f64 / 20.0;
        params.push(OrbitParam::generic(t, 0.37 * i as f64, 0.01));
    }
    let mut group = c.benchmark_group("moment_residual_jacobian_n53");
    for (name, exec) in POLICIES {
        let sys = MomentSystem::new(53, params.clone()).with_exec(exec);
        group.bench_function(name, |b| b.iter(|| black_box(sys.residual_and_jacobian())));
    }
    group.finish();
}

fn exactness(c: &mut Criterion) {
    let rule = product_gauss_legendre(40, 80).unwrap();
    let mut group = c.benchmark_group("verify_exactness_glt40_deg60");
    for (name, exec) in POLICIES {
        group.bench_function(name, |b| b.iter(|| black_box(verify_exactness(&rule, 60, exec))));
    }
    group.finish();
}

fn phase_matrix(c: &mut Criterion) {
    let rule = product_trapezoid(30, 60).unwrap();
    let mut group = c.benchmark_group("phase_matrix_tt30x60");
    for (name, exec) in POLICIES {
        group.bench_function(name, |b| b.iter(|| black_box(build_phase_matrix(&rule, 0.5, true, exec).unwrap())));
    }
    group.finish();
}

fn kernel_errors(c: &mut Criterion) {
    let k = HgIntegrand::reference();
    let rules: Vec<_> = (4..40)
        .map(|m| (format!("glt_{m}"), product_gauss_legendre(m, 2 * m).unwrap()))
        .collect();
    let mut group = c.benchmark_group("hg_error_sweep");
    for (name, exec) in POLICIES {
        group.bench_function(name, |b| b.iter(|| black_box(error_sweep(&rules, &k, exec))));
    }
    group.finish();
}

fn transport_sweep(c: &mut Criterion) {
    let grid = Grid::new(12, 12, 12, 1.0).unwrap();
    let rule = product_gauss_legendre(12, 24).unwrap();
    let p = RteProblem::homogeneous(grid, Material { mu_a: 0.02, mu_s: 1.0, g: 0.5 }, rule, ProblemOptions::default())
        .unwrap()
        .with_source(Source::Isotropic(vec![1.0 / (4.0 * PI); grid.voxels()]))
        .unwrap();
    let mut group = c.benchmark_group("rte_block_jacobi_sweep");
    group.sample_size(20);
    for (name, exec) in POLICIES {
        let sw = Sweeper::new(&p, SweepMode::BlockJacobi, exec);
        group.bench_with_input(BenchmarkId::from_parameter(name), &sw, |b, sw| {
            let mut f = RteField::zeros(&p).intensity;
            b.iter(|| sw.sweep(black_box(&mut f)))
        });
    }
    group.finish();
}

criterion_group!(benches, moment_system, exactness, phase_matrix, kernel_errors, transport_sweep);
criterion_main!(benches);
