//! Polar (n = 2) and spherical (n = 3) annulus grids.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_RESOLUTION: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinates {
    Polar,
    Spherical,
}

/// Uniform grid on r_in ≤ |x| ≤ R.
///
/// `resolution` is the number of radial intervals (resolution + 1 radial
/// nodes including both boundary rings) and the number of azimuthal nodes.
/// On spherical grids the colatitude has resolution/2 nodes offset half a
/// cell from the poles, so all angular spacings equal 2π/resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnulusGrid {
    pub n: usize,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub resolution: usize,
}

impl AnnulusGrid {
    pub fn new(n: usize, inner_radius: f64, outer_radius: f64, resolution: usize) -> Result<Self> {
        let g = Self {
            n,
            inner_radius,
            outer_radius,
            resolution,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n != 2 && self.n != 3 {
            return Err(Error::domain(format!("grid dimension must be 2 or 3, got {}", self.n)));
        }
        if !(self.inner_radius > 0.0) || !(self.outer_radius > self.inner_radius) || !self.outer_radius.is_finite() {
            return Err(Error::domain("grid radii must satisfy 0 < inner_radius < outer_radius"));
        }
        if self.resolution < MIN_RESOLUTION {
            return Err(Error::domain(format!("resolution must be at least {MIN_RESOLUTION}")));
        }
        if self.n == 3 && !self.resolution.is_multiple_of(2) {
            return Err(Error::domain("spherical grids need an even resolution"));
        }
        Ok(())
    }

    pub fn coordinates(&self) -> Coordinates {
        if self.n == 2 {
            Coordinates::Polar
        } else {
            Coordinates::Spherical
        }
    }

    /// Radial spacing.
    pub fn h(&self) -> f64 {
        (self.outer_radius - self.inner_radius) / self.resolution as f64
    }

    pub fn radial_nodes(&self) -> usize {
        self.resolution + 1
    }

    /// Polar-angle nodes (n = 2) or colatitude nodes (n = 3).
    pub fn theta_nodes(&self) -> usize {
        if self.n == 2 {
            self.resolution
        } else {
            self.resolution / 2
        }
    }

    /// Azimuthal nodes (1 for polar grids).
    pub fn phi_nodes(&self) -> usize {
        if self.n == 2 {
            1
        } else {
            self.resolution
        }
    }

    /// Angular spacing, shared by θ and φ.
    pub fn dangle(&self) -> f64 {
        2.0 * PI / self.resolution as f64
    }

    /// Nodes per ring.
    pub fn ring_size(&self) -> usize {
        self.theta_nodes() * self.phi_nodes()
    }

    pub fn node_count(&self) -> usize {
        self.radial_nodes() * self.ring_size()
    }

    pub fn unknowns(&self) -> usize {
        (self.radial_nodes() - 2) * self.ring_size()
    }

    pub fn radius(&self, i: usize) -> f64 {
        if i == self.resolution {
            self.outer_radius
        } else {
            self.inner_radius + self.h() * i as f64
        }
    }

    /// Polar angle θ_j = jΔ (n = 2) or colatitude θ_j = (j + ½)Δ (n = 3).
    pub fn theta(&self, j: usize) -> f64 {
        if self.n == 2 {
            self.dangle() * j as f64
        } else {
            self.dangle() * (j as f64 + 0.5)
        }
    }

    pub fn phi(&self, k: usize) -> f64 {
        self.dangle() * k as f64
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.theta_nodes() + j) * self.phi_nodes() + k
    }

    /// (i, j, k) of a node index.
    pub fn split(&self, node: usize) -> (usize, usize, usize) {
        let k = node % self.phi_nodes();
        let rest = node / self.phi_nodes();
        (rest / self.theta_nodes(), rest % self.theta_nodes(), k)
    }

    /// Node index of the angular neighbour (j + dj, k + dk) in ring i,
    /// reflecting across the poles of spherical grids.
    pub fn angular_neighbor(&self, i: usize, j: usize, k: usize, dj: isize, dk: isize) -> usize {
        let nt = self.theta_nodes() as isize;
        let np = self.phi_nodes() as isize;
        let mut jj = j as isize + dj;
        let mut kk = k as isize + dk;
        if self.n == 2 {
            jj = jj.rem_euclid(nt);
            kk = 0;
        } else {
            if jj < 0 {
                jj = -jj - 1;
                kk += np / 2;
            } else if jj >= nt {
                jj = 2 * nt - 1 - jj;
                kk += np / 2;
            }
            kk = kk.rem_euclid(np);
        }
        self.node(i, jj as usize, kk as usize)
    }

    /// Unit direction of angular position (j, k).
    pub fn direction(&self, j: usize, k: usize) -> Vec<f64> {
        let t = self.theta(j);
        if self.n == 2 {
            vec![t.cos(), t.sin()]
        } else {
            let p = self.phi(k);
            vec![t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
        }
    }

    pub fn position(&self, node: usize) -> Vec<f64> {
        let (i, j, k) = self.split(node);
        let r = self.radius(i);
        self.direction(j, k).into_iter().map(|v| v * r).collect()
    }

    /// Columns e_r, e_θ (, e_φ) of the orthonormal frame at angles (θ, φ).
    pub fn frame(&self, theta: f64, phi: f64) -> DMatrix<f64> {
        let (st, ct) = theta.sin_cos();
        if self.n == 2 {
            DMatrix::from_row_slice(2, 2, &[ct, -st, st, ct])
        } else {
            let (sp, cp) = phi.sin_cos();
            DMatrix::from_row_slice(3, 3, &[st * cp, ct * cp, -sp, st * sp, ct * sp, cp, ct, -st, 0.0])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(AnnulusGrid::new(3, 1.0, 8.0, 64).is_ok());
        assert!(AnnulusGrid::new(4, 1.0, 8.0, 64).is_err());
        assert!(AnnulusGrid::new(2, 2.0, 1.0, 64).is_err());
        assert!(AnnulusGrid::new(2, 1.0, 8.0, 8).is_err());
        assert!(AnnulusGrid::new(3, 1.0, 8.0, 17).is_err());
    }

    #[test]
    fn indexing_round_trips() {
        let g = AnnulusGrid::new(3, 1.0, 2.0, 16).unwrap();
        for node in 0..g.node_count() {
            let (i, j, k) = g.split(node);
            assert_eq!(g.node(i, j, k), node);
        }
        assert_eq!(g.radius(16), 2.0);
    }

    #[test]
    fn pole_reflection_is_consistent_with_positions() {
        let g = AnnulusGrid::new(3, 1.0, 2.0, 16).unwrap();
        // The ghost across the north pole sits at colatitude −θ₀, i.e. θ₀ on the opposite meridian.
        let ghost = g.angular_neighbor(1, 0, 3, -1, 0);
        let (_, j, k) = g.split(ghost);
        assert_eq!((j, k), (0, 3 + 8));
        let p = g.position(ghost);
        let t = -g.theta(0);
        let ph = g.phi(3);
        let expected = [
            t.sin() * ph.cos() * g.radius(1),
            t.sin() * ph.sin() * g.radius(1),
            t.cos() * g.radius(1),
        ];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn frames_are_orthonormal() {
        for n in [2, 3] {
            let g = AnnulusGrid::new(n, 1.0, 2.0, 16).unwrap();
            let q = g.frame(0.7, 1.9);
            assert!((q.transpose() * &q - DMatrix::identity(n, n)).amax() < 1e-15);
            let dir = g.direction(3, 5);
            let q = g.frame(g.theta(3), g.phi(5));
            for (a, b) in q.column(0).iter().zip(&dir) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }
}
