use criterion::{criterion_group, criterion_main, Criterion};
use exterior_bench::radial_problem;
use exterior_core::fdsolver::LinearSolver;
use exterior_core::{solve, solve_with, SolveOptions};
use std::hint::black_box;

fn newton_polar(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_n2");
    group.sample_size(10);
    for res in [32, 64] {
        let (grid, inner, outer) = radial_problem(2, res);
        group.bench_function(format!("res{res}"), |b| {
            b.iter(|| solve(black_box(&grid), &inner, &outer, 1e-10).unwrap())
        });
    }
    let (grid, inner, outer) = radial_problem(2, 64);
    for (name, linear_solver) in [
        ("res64_banded", LinearSolver::BandedLu),
        ("res64_gmres", LinearSolver::Gmres),
    ] {
        let options = SolveOptions {
            linear_solver,
            ..SolveOptions::default()
        };
        group.bench_function(name, |b| {
            b.iter(|| solve_with(black_box(&grid), &inner, &outer, &options).unwrap())
        });
    }
    group.finish();
}

fn newton_spherical(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_n3");
    group.sample_size(10);
    let (grid, inner, outer) = radial_problem(3, 24);
    group.bench_function("res24", |b| {
        b.iter(|| solve(black_box(&grid), &inner, &outer, 1e-10).unwrap())
    });
    group.finish();
}

fn interpolation(c: &mut Criterion) {
    let (grid, inner, outer) = radial_problem(3, 24);
    let sol = solve(&grid, &inner, &outer, 1e-10).unwrap();
    c.bench_function("interpolate_n3", |b| {
        b.iter(|| sol.interpolate(black_box(&[1.9, -2.1, 2.3])).unwrap())
    });
}

criterion_group!(benches, newton_polar, newton_spherical, interpolation);
criterion_main!(benches);
