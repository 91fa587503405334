use exterior_core::fit::{fit_expansion, fit_expansion_with, FitOptions, SampleSet, SampleSource};
use exterior_core::linalg::{pushforward_solution, AffineMap};
use exterior_core::{RadialExteriorSolution, ScalarField, SpdUnimodular};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const LADDER: [f64; 5] = [10.0, 20.0, 40.0, 80.0, 160.0];

fn shells(f: &dyn ScalarField, radii: &[f64]) -> SampleSet {
    SampleSet::from_field(f, radii, 96, 1.0, SampleSource::Analytic).unwrap()
}

#[test]
fn radial_fit_recovers_residue_and_tail_order() {
    let u = RadialExteriorSolution::new(3, 1.0, 1.0, 0.0).unwrap();
    let e = fit_expansion(&shells(&u, &LADDER), 3).unwrap();
    assert!((e.d - 1.0 / 3.0).abs() <= 0.005 / 3.0, "d = {}", e.d);
    let order = e.error_order.unwrap();
    assert!(order <= -3.5, "order {order}");
    assert!(
        (e.c - u.additive_constant()).abs() < 1e-6,
        "c = {} vs {}",
        e.c,
        u.additive_constant()
    );
}

#[test]
fn forcing_d_to_zero_leaves_the_residue_order() {
    let u = RadialExteriorSolution::new(3, 1.0, 1.0, 0.0).unwrap();
    let s = shells(&u, &LADDER);
    let full = fit_expansion(&s, 3).unwrap().error_order.unwrap();
    let bare = fit_expansion_with(
        &s,
        3,
        &FitOptions {
            residue_term: false,
            ..Default::default()
        },
    )
    .unwrap()
    .error_order
    .unwrap();
    assert!((-1.2..=-0.8).contains(&bare), "bare order {bare}");
    assert!(bare - full >= 2.0, "improvement {}", bare - full);
}

#[test]
fn translated_radial_fit_predicts_dipole() {
    let u = RadialExteriorSolution::new(3, 1.0, 1.0, 0.0).unwrap();
    let x0 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    // v(x) = u(x − x0).
    let v = pushforward_solution(u, AffineMap::translation(-x0.clone()).unwrap());
    let e = fit_expansion(&shells(&v, &LADDER), 3).unwrap();
    let p = e.dipole.clone().unwrap();
    assert!((p[0] + 1.0 / 3.0).abs() <= 0.02 / 3.0, "dipole {p}");
    assert!(p[1].abs() <= 0.02 / 3.0 && p[2].abs() <= 0.02 / 3.0, "dipole {p}");
    assert!((&e.b + &x0).amax() < 1e-6, "b {}", e.b);
    assert!((e.d - 1.0 / 3.0).abs() < 0.005 / 3.0);
    assert!(e.error_order.unwrap() <= -1.8);
}

#[test]
fn four_dimensional_radial_fit() {
    let u = RadialExteriorSolution::new(4, 1.0, 1.0, 0.0).unwrap();
    let e = fit_expansion(&shells(&u, &LADDER), 4).unwrap();
    let d = u.residue_coefficient();
    assert!((e.d - d).abs() <= 0.005 * d, "d = {} vs {d}", e.d);
}

#[test]
fn two_dimensional_radial_fit() {
    let u = RadialExteriorSolution::new(2, 1.0, 1.0, 0.0).unwrap();
    let e = fit_expansion(&shells(&u, &LADDER), 2).unwrap();
    assert!((e.d - 0.5).abs() <= 0.0025, "d = {}", e.d);
    assert!(e.error_order.unwrap() <= -1.8);
}

fn random_spd_unimodular(n: usize, entries: &[f64]) -> SpdUnimodular {
    let m = DMatrix::from_fn(n, n, |i, j| entries[(i * n + j) % entries.len()]);
    let s = &m * m.transpose() + DMatrix::identity(n, n);
    let det = s.determinant();
    SpdUnimodular::new(s / det.powf(1.0 / n as f64)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fitter_is_exact_on_its_model_class(
        entries in prop::collection::vec(-0.5f64..0.5, 9),
        b in prop::collection::vec(-2.0f64..2.0, 3),
        c in -5.0f64..5.0,
        d in -2.0f64..2.0,
        p in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let a = random_spd_unimodular(3, &entries);
        let truth = exterior_core::AsymptoticExpansion::new(a.clone(), DVector::from_vec(b.clone()), c, d)
            .unwrap()
            .with_dipole(DVector::from_vec(p.clone()))
            .unwrap();
        let e = fit_expansion(&shells(&truth, &LADDER), 3).unwrap();
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1.0);
        prop_assert!((e.a.matrix() - a.matrix()).amax() < 1e-8);
        prop_assert!((e.b.clone() - DVector::from_vec(b)).amax() < 1e-8);
        prop_assert!(rel(e.c, c) < 1e-8, "c {} vs {}", e.c, c);
        prop_assert!(rel(e.d, d) < 1e-8, "d {} vs {}", e.d, d);
        let fitted_p = e.dipole.unwrap();
        prop_assert!((fitted_p - DVector::from_vec(p)).amax() < 1e-8);
    }

    #[test]
    fn fit_is_affine_equivariant(entries in prop::collection::vec(-0.4f64..0.4, 4)) {
        let u = RadialExteriorSolution::new(3, 1.0, 1.0, 0.0).unwrap();
        let base = fit_expansion(&shells(&u, &LADDER), 3).unwrap();
        let t = {
            let m = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { entries[(i + 2 * j) % 4] });
            let det = m.determinant();
            prop_assume!(det > 0.2);
            m / det.cbrt()
        };
        let v = pushforward_solution(u, AffineMap::new(t.clone(), DVector::zeros(3)).unwrap());
        let e = fit_expansion(&shells(&v, &LADDER), 3).unwrap();
        let expected = t.transpose() * base.a.matrix() * &t;
        prop_assert!((e.a.matrix() - expected).amax() < 1e-6);
        prop_assert!((e.c - base.c).abs() < 1e-5);
        prop_assert!((e.d - base.d).abs() < 1e-3 * base.d);
    }
}
