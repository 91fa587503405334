use criterion::{criterion_group, criterion_main, Criterion};
use exterior_bench::radial;
use exterior_core::{residue, FluxField, ReferenceField, SurfaceSpec};
use std::hint::black_box;

fn residue_surfaces(c: &mut Criterion) {
    let u = radial(3);
    let field = FluxField::new(&u, ReferenceField::Coordinate);
    let surfaces = [
        ("sphere", SurfaceSpec::sphere(vec![0.0; 3], 4.0)),
        ("ellipsoid", SurfaceSpec::ellipsoid(vec![0.0; 3], vec![1.5, 2.0, 2.5])),
        ("box", SurfaceSpec::cube(vec![0.0; 3], 3.0)),
    ];
    let mut group = c.benchmark_group("residue_n3");
    for (name, s) in &surfaces {
        group.bench_function(*name, |b| b.iter(|| residue(black_box(&field), s, 3).unwrap()));
    }
    group.finish();
}

fn residue_planar(c: &mut Criterion) {
    let u = radial(2);
    let field = FluxField::new(&u, ReferenceField::Coordinate);
    let s = SurfaceSpec::sphere(vec![0.0; 2], 4.0);
    c.bench_function("residue_n2_circle", |b| {
        b.iter(|| residue(black_box(&field), &s, 2).unwrap())
    });
}

criterion_group!(benches, residue_surfaces, residue_planar);
criterion_main!(benches);
