//! Analytic solution families used as data by the commands.

use exterior_core::field::ScalarField;
use exterior_core::linalg::{pushforward_solution, QuadraticProfile, MAX_DIM};
use exterior_core::{AffineMap, RadialExteriorSolution};

use crate::error::{CliError, FieldExt};

/// Radial solution, optionally composed with an affine map.
pub fn radial_field(
    n: usize,
    a: f64,
    r0: f64,
    u0: f64,
    affine: Option<&AffineMap>,
    prefix: &str,
) -> Result<Box<dyn ScalarField>, CliError> {
    let u = RadialExteriorSolution::new(n, a, r0, u0).field(prefix)?;
    compose(u, n, affine, prefix)
}

/// ½|x|², optionally composed with an affine map.
pub fn quadratic_field(n: usize, affine: Option<&AffineMap>, prefix: &str) -> Result<Box<dyn ScalarField>, CliError> {
    if !(2..=MAX_DIM).contains(&n) {
        return Err(CliError::config(
            format!("{prefix}.n"),
            format!("dimension must lie in 2..={MAX_DIM}, got {n}"),
        ));
    }
    compose(QuadraticProfile::standard(n), n, affine, prefix)
}

fn compose<F: ScalarField + 'static>(
    u: F,
    n: usize,
    affine: Option<&AffineMap>,
    prefix: &str,
) -> Result<Box<dyn ScalarField>, CliError> {
    match affine {
        None => Ok(Box::new(u)),
        Some(map) if map.dim() != n => Err(CliError::config(
            format!("{prefix}.affine"),
            format!("affine map has dimension {}, expected {n}", map.dim()),
        )),
        Some(map) => Ok(Box::new(pushforward_solution(u, map.clone()))),
    }
}

/// Lower bound on |Tx + s| over the sphere |x| = `r`.
pub fn min_image_radius(affine: Option<&AffineMap>, r: f64) -> f64 {
    match affine {
        None => r,
        Some(map) => {
            let sigma = map.linear().singular_values().min();
            sigma * r - map.shift().norm()
        }
    }
}
