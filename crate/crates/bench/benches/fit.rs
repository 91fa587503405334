use criterion::{criterion_group, criterion_main, Criterion};
use exterior_bench::radial_shells;
use exterior_core::fit_expansion;
use std::hint::black_box;

fn fit_radial(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_expansion");
    for n in [2, 3, 4] {
        let samples = radial_shells(n);
        group.bench_function(format!("n{n}"), |b| {
            b.iter(|| fit_expansion(black_box(&samples), n).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, fit_radial);
criterion_main!(benches);
