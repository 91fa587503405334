use exterior_core::field::{FundamentalHarmonic, PerturbedQuadratic};
use exterior_core::flux::{cofactor_divergence, residue, residue_from_source, FluxField, ReferenceField, SurfaceSpec};
use exterior_core::linalg::{pushforward_solution, AffineMap};
use exterior_core::{RadialExteriorSolution, ScalarField};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn radial(n: usize) -> RadialExteriorSolution {
    RadialExteriorSolution::new(n, 1.0, 1.0, 0.0).unwrap()
}

fn res(u: &dyn ScalarField, s: &SurfaceSpec, xi: ReferenceField) -> f64 {
    residue(&FluxField::new(u, xi), s, u.dim()).unwrap().value
}

#[test]
fn radial_residues_match_coefficients() {
    let u3 = radial(3);
    let r3 = residue(
        &FluxField::new(&u3, ReferenceField::Coordinate),
        &SurfaceSpec::sphere(vec![0.0; 3], 4.0),
        3,
    )
    .unwrap();
    assert!((r3.value - 1.0 / 3.0).abs() < 1e-8, "{}", r3.value);
    assert!(!r3.accuracy_warning);
    let u2 = radial(2);
    let r2 = res(&u2, &SurfaceSpec::sphere(vec![0.0; 2], 4.0), ReferenceField::Coordinate);
    assert!((r2 - 0.5).abs() < 1e-8, "{r2}");
    let u4 = radial(4);
    let r4 = residue(
        &FluxField::new(&u4, ReferenceField::Coordinate),
        &SurfaceSpec::sphere(vec![0.0; 4], 3.0),
        4,
    )
    .unwrap();
    assert!((r4.value - 0.125).abs() < 5.0 * r4.error_estimate.max(1e-6), "{r4:?}");
}

#[test]
fn residue_is_surface_independent() {
    let u = radial(3);
    let surfaces = [
        SurfaceSpec::sphere(vec![0.0; 3], 2.0),
        SurfaceSpec::sphere(vec![0.0; 3], 5.0),
        SurfaceSpec::ellipsoid(vec![0.0; 3], vec![1.5, 2.0, 2.5]),
        SurfaceSpec::cube(vec![0.0; 3], 3.0),
    ];
    let values: Vec<f64> = surfaces
        .iter()
        .map(|s| res(&u, s, ReferenceField::Coordinate))
        .collect();
    for a in &values {
        for b in &values {
            assert!((a - b).abs() < 1e-6, "{values:?}");
        }
    }
    let off_center = SurfaceSpec::sphere(vec![0.5, -0.3, 0.2], 3.0);
    assert!((res(&u, &off_center, ReferenceField::Coordinate) - values[0]).abs() < 1e-6);
}

#[test]
fn residue_is_reference_field_independent() {
    for n in [2, 3] {
        let u = radial(n);
        let s = SurfaceSpec::sphere(vec![0.0; n], 3.0);
        let a = res(&u, &s, ReferenceField::Coordinate);
        let b = res(&u, &s, ReferenceField::ScaledIdentity);
        assert!((a - b).abs() < 1e-8, "n={n}: {a} vs {b}");
    }
    let box2 = SurfaceSpec::cube(vec![0.0; 3], 2.5);
    let u = PerturbedQuadratic { n: 3, c_tilde: -0.2 };
    let a = res(&u, &box2, ReferenceField::Coordinate);
    let b = res(&u, &box2, ReferenceField::ScaledIdentity);
    assert!((a - b).abs() < 1e-8, "{a} {b}");
}

#[test]
fn source_residues() {
    let disk = residue_from_source(|x, y| if x * x + y * y <= 1.0 { 1.0 } else { 0.0 }, 1.0).unwrap();
    assert!((disk - 0.5).abs() < 1e-8, "{disk}");
}

fn unimodular(entries: &[f64], n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 + entries[i]
        } else {
            entries[(n + i * n + j) % entries.len()]
        }
    });
    let det = m.determinant();
    m / det.abs().powf(1.0 / n as f64) * det.signum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn residue_is_affine_invariant(entries in prop::collection::vec(-0.3f64..0.3, 12), shift in prop::collection::vec(-0.5f64..0.5, 3)) {
        let t = unimodular(&entries, 3);
        prop_assume!(t.determinant() > 0.0);
        let map = AffineMap::new(t.clone(), DVector::from_vec(shift.clone())).unwrap();
        // v(x) = u(Tx + s); the sphere of radius 4 around the origin maps to the ellipsoid T⁻¹(B₄ − s).
        let v = pushforward_solution(radial(3), map.clone());
        let inv = map.inverse().unwrap();
        let center: Vec<f64> = inv.apply(&[0.0; 3]).iter().copied().collect();
        // A sphere around the preimage of the origin large enough to enclose T⁻¹B₂.
        let sv = t.clone().svd(false, false);
        let radius = 2.5 / sv.singular_values.min();
        let value = res(&v, &SurfaceSpec::sphere(center, radius), ReferenceField::Coordinate);
        prop_assert!((value - 1.0 / 3.0).abs() < 1e-6, "{}", value);
    }
}

/// RMS of the cofactor divergence over points, at step h.
fn divergence_rms(u: &dyn ScalarField, points: &[Vec<f64>], h: f64) -> f64 {
    let s: f64 = points
        .iter()
        .map(|x| cofactor_divergence(u, x, h).unwrap().powi(2))
        .sum();
    (s / points.len() as f64).sqrt()
}

#[test]
fn cofactor_rows_are_divergence_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let points: Vec<Vec<f64>> = (0..100)
        .map(|_| loop {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (2.0..4.0).contains(&r) {
                break x;
            }
        })
        .collect();
    let t = DMatrix::<f64>::from_row_slice(3, 3, &[1.2, 0.3, 0.0, 0.0, 1.0, 0.2, 0.1, 0.0, 1.0]);
    let t = &t / t.determinant().cbrt();
    let families: Vec<Box<dyn ScalarField>> = vec![
        Box::new(radial(3)),
        Box::new(pushforward_solution(
            radial(3),
            AffineMap::new(t, DVector::zeros(3)).unwrap(),
        )),
        Box::new(PerturbedQuadratic { n: 3, c_tilde: 0.4 }),
        Box::new(FundamentalHarmonic { n: 3, coeff: 2.0 }),
    ];
    for (k, u) in families.iter().enumerate() {
        let coarse = divergence_rms(u.as_ref(), &points, 0.05);
        let fine = divergence_rms(u.as_ref(), &points, 0.025);
        let order = (coarse / fine).log2();
        assert!(order >= 1.9, "family {k}: {coarse:e} -> {fine:e}, order {order}");
    }
}
