use exterior_core::field::FnField;
use exterior_core::fit::shell_directions;
use exterior_core::kelvin::{decay_profile, verify_kelvin_laplace_identity, verify_linearization, verify_source_decay};
use exterior_core::linalg::{pushforward_solution, AffineMap};
use exterior_core::numerics::geometric_ladder;
use exterior_core::radial::RadialDeviation;
use exterior_core::RadialExteriorSolution;
use nalgebra::{DMatrix, DVector};

fn normalized(n: usize) -> RadialExteriorSolution {
    RadialExteriorSolution::normalized(n, 1.0, 1.0).unwrap()
}

fn shell_points(n: usize, count: usize, r: f64) -> Vec<Vec<f64>> {
    shell_directions(n, count)
        .iter()
        .map(|w| w.iter().map(|v| v * r).collect())
        .collect()
}

#[test]
fn decay_orders_of_radial_deviation() {
    for n in [3, 4] {
        let e = RadialDeviation::new(normalized(n)).unwrap();
        let p = decay_profile(&e, &geometric_ladder(10.0, 2.0, 5)).unwrap();
        assert!(p.pass, "n={n}: {p:?}");
    }
}

#[test]
fn linearization_on_radial_solution() {
    let u = normalized(3);
    let mut pts = shell_points(3, 20, 5.0);
    let r = verify_linearization(&u, &pts).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(r.deviations.iter().all(|d| *d <= 1e-8));
    // |a − I| ~ 5^{-3} at |x| = 5.
    assert!(r.coefficient_deviations.iter().all(|d| *d < 10.0 * 5f64.powi(-3)));
    pts.extend(shell_points(3, 20, 40.0));
    let r = verify_linearization(&u, &pts).unwrap();
    assert!(r.pass && r.fitted_order.unwrap() <= -2.8, "{:?}", r.fitted_order);
}

#[test]
fn linearization_on_normalized_affine_image() {
    let t = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.0, 0.5, 0.1, 0.0, 0.0, 1.0]);
    // Right polar factor removed: T S is orthogonal for S = (T'T)^{-1/2}, so D²(u∘TS) → I.
    let tt = t.transpose() * &t;
    let eig = tt.clone().symmetric_eigen();
    let s = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l: f64| 1.0 / l.sqrt()))
        * eig.eigenvectors.transpose();
    let map = AffineMap::new(&t * s, DVector::zeros(3)).unwrap();
    let v = pushforward_solution(normalized(3), map);
    let r = verify_linearization(&v, &shell_points(3, 20, 5.0)).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn source_decay_on_radial_solution() {
    let r = verify_source_decay(&normalized(3), &geometric_ladder(10.0, 2.0, 5)).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn kelvin_laplace_on_radial_deviation() {
    let sol = normalized(3);
    let e = RadialDeviation::new(sol).unwrap();
    let g = FnField::new(3, move |x: &[f64]| {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        e.laplacian_at(r)
    });
    let mut pts = shell_points(3, 10, 0.3);
    pts.extend(shell_points(3, 10, 0.6));
    let rep = verify_kelvin_laplace_identity(&e, &g, &pts, 0.02).unwrap();
    assert!(rep.pass, "{rep:?}");
    assert!(rep.fitted_order.unwrap() >= 1.9);
}
