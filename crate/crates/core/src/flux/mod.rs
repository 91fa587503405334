//! Divergence structure of the Monge–Ampère operator and the residue.
//!
//! det(D²u) = Σ_j ∂_j(u₁ũ_{1j}) = div ψ(u), where ũ is the cofactor matrix
//! of D²u. Subtracting a reference field ξ with div ξ = 1, the flux of
//! ψ(u) − ξ through a closed surface around the excluded set does not
//! depend on the surface; normalized, it is the residue Res[u].

mod surface;

pub(crate) use surface::qmc_sphere;
pub use surface::{Quadrature, SurfaceKind, SurfaceNode, SurfaceSpec};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::linalg::check_dim;
use crate::numerics::{adaptive_lobatto_panels, pairwise_sum, unit_ball_volume};

/// Quadrature error estimates above this raise the accuracy warning.
pub const ACCURACY_THRESHOLD: f64 = 1e-6;

fn det2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    a * d - b * c
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * det2(m[1][1], m[1][2], m[2][1], m[2][2]) - m[0][1] * det2(m[1][0], m[1][2], m[2][0], m[2][2])
        + m[0][2] * det2(m[1][0], m[1][1], m[2][0], m[2][1])
}

/// Minor of `h` with row 0 and column `j` removed.
fn first_row_minor(h: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    h.clone().remove_row(0).remove_column(j)
}

/// First row `(ũ_{11}, …, ũ_{1n})` of the cofactor matrix of `h`.
///
/// Explicit minor expansion up to n = 4, LU determinants of the minors
/// beyond; `h` need not be invertible.
pub fn cofactor_row(h: &DMatrix<f64>) -> DVector<f64> {
    let n = h.nrows();
    assert!(h.is_square() && n >= 1, "cofactor_row needs a square matrix");
    let sign = |j: usize| if j.is_multiple_of(2) { 1.0 } else { -1.0 };
    match n {
        1 => DVector::from_element(1, 1.0),
        2 => DVector::from_vec(vec![h[(1, 1)], -h[(1, 0)]]),
        3 => DVector::from_fn(3, |j, _| {
            let cols: Vec<usize> = (0..3).filter(|&c| c != j).collect();
            sign(j) * det2(h[(1, cols[0])], h[(1, cols[1])], h[(2, cols[0])], h[(2, cols[1])])
        }),
        4 => DVector::from_fn(4, |j, _| {
            let cols: Vec<usize> = (0..4).filter(|&c| c != j).collect();
            let mut m = [[0.0; 3]; 3];
            for (r, row) in m.iter_mut().enumerate() {
                for (c, col) in cols.iter().enumerate() {
                    row[c] = h[(r + 1, *col)];
                }
            }
            sign(j) * det3(&m)
        }),
        _ => DVector::from_fn(n, |j, _| sign(j) * first_row_minor(h, j).lu().determinant()),
    }
}

/// Σ_j ∂_j ũ_{1j}(x) by central differences of the Hessian with step `h`.
///
/// The cofactor rows of a Hessian are divergence free, so this is pure
/// truncation error O(h²) for smooth `u`.
pub fn cofactor_divergence(u: &dyn ScalarField, x: &[f64], h: f64) -> Result<f64> {
    let mut y = x.to_vec();
    let mut div = 0.0;
    for j in 0..x.len() {
        y[j] = x[j] + h;
        let plus = cofactor_row(&u.hessian(&y)?)[j];
        y[j] = x[j] - h;
        let minus = cofactor_row(&u.hessian(&y)?)[j];
        y[j] = x[j];
        div += (plus - minus) / (2.0 * h);
    }
    Ok(div)
}

/// Reference field ξ with div ξ = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceField {
    /// ξ(x) = x₁e₁.
    #[default]
    Coordinate,
    /// ξ(x) = x/n.
    ScaledIdentity,
}

impl ReferenceField {
    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            ReferenceField::Coordinate => {
                let mut v = DVector::zeros(x.len());
                v[0] = x[0];
                v
            }
            ReferenceField::ScaledIdentity => x / x.len() as f64,
        }
    }
}

/// The field ψ(u) paired with a reference field ξ.
#[derive(Clone, Copy)]
pub struct FluxField<'a> {
    pub u: &'a dyn ScalarField,
    pub xi: ReferenceField,
}

impl<'a> FluxField<'a> {
    pub fn new(u: &'a dyn ScalarField, xi: ReferenceField) -> Self {
        Self { u, xi }
    }

    /// ψ(u)(x) = (u₁ ũ_{1j})_j.
    pub fn psi(&self, x: &[f64]) -> Result<DVector<f64>> {
        let g = self.u.gradient(x)?;
        let h = self.u.hessian(x)?;
        Ok(cofactor_row(&h) * g[0])
    }

    fn integrand(&self, node: &SurfaceNode) -> Result<f64> {
        let psi = self.psi(node.point.as_slice())?;
        Ok((psi - self.xi.eval(&node.point)).dot(&node.normal_weight))
    }
}

/// ψ(u)(x) for the given field.
pub fn psi(field: &FluxField<'_>, x: &[f64]) -> Result<DVector<f64>> {
    field.psi(x)
}

/// Normalization turning the flux of ψ − ξ into the residue:
/// 1/(2π) for n = 2, 1/((n−2)nωₙ) for n ≥ 3.
pub fn residue_normalization(n: usize) -> f64 {
    if n == 2 {
        1.0 / (2.0 * PI)
    } else {
        1.0 / ((n - 2) as f64 * n as f64 * unit_ball_volume(n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidueResult {
    pub value: f64,
    pub surface: SurfaceSpec,
    pub nodes: usize,
    pub error_estimate: f64,
    pub xi_choice: ReferenceField,
    pub n: usize,
    /// Set when the error estimate exceeds 1e-6.
    pub accuracy_warning: bool,
}

/// Normalized flux over one node set (rule evaluation in parallel, pairwise reduction).
fn flux_over(field: &FluxField<'_>, nodes: &[SurfaceNode], norm: f64, label: &str) -> Result<f64> {
    let terms: Vec<f64> = nodes
        .par_iter()
        .map(|nd| field.integrand(nd))
        .collect::<Result<Vec<f64>>>()
        .map_err(|e| match e {
            Error::Domain(m) => Error::Domain(format!("{label}: {m}")),
            other => other,
        })?;
    Ok(norm * pairwise_sum(&terms))
}

/// Res[u] over `surface` in dimension `n`.
///
/// The error estimate compares the configured rule with one that has half
/// the nodes per direction; randomized QMC rules report the standard error
/// of the replicate mean instead. The surface must lie in the domain of the
/// field; any evaluation outside is a domain error naming the surface.
pub fn residue(field: &FluxField<'_>, surface: &SurfaceSpec, n: usize) -> Result<ResidueResult> {
    residue_seeded(field, surface, n, 0)
}

/// [`residue`] with an explicit seed for randomized default rules.
pub fn residue_seeded(field: &FluxField<'_>, surface: &SurfaceSpec, n: usize, seed: u64) -> Result<ResidueResult> {
    check_dim(n)?;
    if field.u.dim() != n {
        return Err(Error::domain(format!(
            "field has dimension {}, residue requested in dimension {n}",
            field.u.dim()
        )));
    }
    surface.validate(n)?;
    let rule = surface.resolved_quadrature(n, seed);
    let norm = residue_normalization(n);
    let label = surface.label();
    let sets = surface.nodes(n, &rule)?;
    let nodes: usize = sets.iter().map(Vec::len).sum();
    let (value, error_estimate) = if sets.len() > 1 {
        let per: Vec<f64> = sets
            .iter()
            .map(|s| flux_over(field, s, norm, &label))
            .collect::<Result<_>>()?;
        let m = per.len() as f64;
        let mean = pairwise_sum(&per) / m;
        let var = per.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (mean, (var / m).sqrt())
    } else {
        let fine = flux_over(field, &sets[0], norm, &label)?;
        let coarse_rule = rule.coarsened().expect("deterministic rule");
        let coarse_sets = surface.nodes(n, &coarse_rule)?;
        let coarse = flux_over(field, &coarse_sets[0], norm, &label)?;
        (fine, (fine - coarse).abs())
    };
    Ok(ResidueResult {
        value,
        surface: SurfaceSpec {
            kind: surface.kind.clone(),
            quadrature: Some(rule),
        },
        nodes,
        error_estimate,
        xi_choice: field.xi,
        n,
        accuracy_warning: error_estimate > ACCURACY_THRESHOLD,
    })
}

/// (1/2π)∫_{ℝ²}(f − 1) for a source perturbation supported in the disk of
/// radius `support_radius`, by iterated adaptive Gauss–Lobatto quadrature
/// over the enclosing square (absolute tolerance well below 1e-8).
/// Discontinuous sources such as indicators are supported.
pub fn residue_from_source<F>(f_minus_1: F, support_radius: f64) -> Result<f64>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    if !(support_radius > 0.0) || !support_radius.is_finite() {
        return Err(Error::domain("support radius must be positive"));
    }
    let r = support_radius;
    let inner = |x: f64| adaptive_lobatto_panels(|y| f_minus_1(x, y), -r, r, 1e-12, 8).0;
    let (total, _) = adaptive_lobatto_panels(inner, -r, r, 1e-11, 8);
    Ok(total / (2.0 * PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::QuadraticProfile;
    use crate::radial::RadialExteriorSolution;

    #[test]
    fn cofactor_row_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(cofactor_row(&id), DVector::from_vec(vec![1.0, 0.0, 0.0]));
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 4.0]));
        assert_eq!(cofactor_row(&d), DVector::from_vec(vec![12.0, 0.0, 0.0]));
    }

    #[test]
    fn cofactor_row_of_singular_matrix() {
        let h = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        // Rows 2 and 3 determine the first cofactor row regardless of row 1.
        let row = cofactor_row(&h);
        assert_eq!(row, DVector::from_vec(vec![-2.0, -2.0, 2.0]));
    }

    #[test]
    fn cofactor_row_against_adjugate_all_dimensions() {
        for n in 2..=6 {
            let m = DMatrix::from_fn(n, n, |i, j| {
                1.0 / (1.0 + i as f64 + j as f64) + if i == j { 1.0 } else { 0.0 }
            });
            let adj = m.clone().try_inverse().unwrap() * m.determinant();
            let row = cofactor_row(&m);
            // Cofactor row 1 equals column 1 of the adjugate.
            for j in 0..n {
                assert!((row[j] - adj[(j, 0)]).abs() < 1e-12 * adj.norm(), "n={n} j={j}");
            }
        }
    }

    #[test]
    fn psi_of_standard_quadratic() {
        let q = QuadraticProfile::standard(3);
        let f = FluxField::new(&q, ReferenceField::Coordinate);
        assert_eq!(f.psi(&[2.0, 0.0, 0.0]).unwrap(), DVector::from_vec(vec![2.0, 0.0, 0.0]));
    }

    #[test]
    fn quadratic_has_zero_residue() {
        let q = QuadraticProfile::standard(3);
        let f = FluxField::new(&q, ReferenceField::Coordinate);
        let r = residue(&f, &SurfaceSpec::sphere(vec![0.0; 3], 2.0), 3).unwrap();
        assert!(r.value.abs() < 1e-14);
        assert!(!r.accuracy_warning);
    }

    #[test]
    fn residue_outside_domain_names_surface() {
        let u = RadialExteriorSolution::new(3, 1.0, 1.0, 0.0).unwrap();
        let f = FluxField::new(&u, ReferenceField::Coordinate);
        let err = residue(&f, &SurfaceSpec::sphere(vec![0.0; 3], 0.5), 3).unwrap_err();
        match err {
            Error::Domain(m) => assert!(m.contains("sphere"), "{m}"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn source_residue_examples() {
        assert_eq!(residue_from_source(|_, _| 0.0, 1.0).unwrap(), 0.0);
        let sigma: f64 = 0.5;
        let g = residue_from_source(|x, y| (-(x * x + y * y) / (2.0 * sigma * sigma)).exp(), 12.0 * sigma).unwrap();
        assert!((g - 0.25).abs() < 1e-10, "{g}");
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let q = QuadraticProfile::standard(3);
        let f = FluxField::new(&q, ReferenceField::Coordinate);
        assert!(residue(&f, &SurfaceSpec::sphere(vec![0.0; 2], 2.0), 2).is_err());
    }
}
