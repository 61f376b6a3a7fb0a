//! Criterion micro-benchmarks for the hot paths of the solver: operator
//! assembly, saddle-point factorisation and solve, a full implicit-Euler
//! step, and Wiener path generation.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use sns_core::benchmarks::{make_example, ExampleId};
use sns_core::grid_fem::{assemble_operators, build_mesh, build_spaces};
use sns_core::saddle::SaddleSystem;
use sns_core::schemes::{run, RecordSpec, SchemeConfig, SchemeKind};
use sns_core::sparse::matvec;
use sns_core::stochastics::generate_path;

fn bench_assembly(c: &mut Criterion) {
    sns_core::init_deterministic_linear_algebra();
    let spaces = build_spaces(build_mesh(16).unwrap());
    c.bench_function("assemble_operators_n16", |b| {
        b.iter(|| assemble_operators(&spaces).unwrap())
    });
}

fn bench_saddle(c: &mut Criterion) {
    sns_core::init_deterministic_linear_algebra();
    let spaces = build_spaces(build_mesh(16).unwrap());
    let ops = assemble_operators(&spaces).unwrap();
    c.bench_function("saddle_factorise_n16", |b| {
        b.iter(|| {
            SaddleSystem::new_ungauged(&ops.m, &ops.b, 1.0, &ops.mean_vec, &[], None).unwrap()
        })
    });
    let sys = SaddleSystem::new_ungauged(&ops.m, &ops.b, 1.0, &ops.mean_vec, &[], None).unwrap();
    let u: Vec<f64> = (0..spaces.n_velocity()).map(|i| (i as f64).sin()).collect();
    let rhs_u = matvec(&ops.m, &u);
    let rhs_p = vec![0.0; spaces.n_pressure()];
    c.bench_function("saddle_solve_n16", |b| b.iter(|| sys.solve(&rhs_u, &rhs_p, 0).unwrap()));
}

fn bench_implicit_euler_step(c: &mut Criterion) {
    sns_core::init_deterministic_linear_algebra();
    let spaces = build_spaces(build_mesh(16).unwrap());
    let ops = assemble_operators(&spaces).unwrap();
    let problem = make_example(&ExampleId::AdditiveGeneral).unwrap();
    let tau = problem.t_end / 8.0;
    let cfg = SchemeConfig::new(SchemeKind::ImplicitEuler, tau);
    let path = generate_path(0, 0, 64, problem.t_end, &problem.mode_ids()).unwrap();
    // One trajectory = factorisation + 8 steps; per-step cost is the
    // dominant term at this τ.
    c.bench_function("implicit_euler_trajectory_8_steps_n16", |b| {
        b.iter_batched(
            || RecordSpec { stride: 8 },
            |rec| run(&problem, &cfg, &spaces, &ops, &path, &rec).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn bench_path_generation(c: &mut Criterion) {
    c.bench_function("generate_path_1024_steps_2_modes", |b| {
        b.iter(|| generate_path(0, 0, 1024, 1.0, &[0, 1]).unwrap())
    });
}

criterion_group!(
    benches,
    bench_assembly,
    bench_saddle,
    bench_implicit_euler_step,
    bench_path_generation
);
criterion_main!(benches);
