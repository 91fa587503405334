//! Exact radial exterior solutions of det(D²u) = 1.
//!
//! For radial `u`, det(D²u) = u''(u'/r)^{n−1}, and the equation integrates
//! to (u')ⁿ = rⁿ + a. Every quantity below is evaluated in a form that avoids
//! cancellation against the leading quadratic, so far-field deviations keep
//! full relative precision.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::{norm, ScalarField};
use crate::fit::AsymptoticExpansion;
use crate::linalg::{check_dim, SpdUnimodular};
use crate::numerics::adaptive_gauss_legendre;

const VALUE_TOL: f64 = 1e-12;
/// Radius (in units of r0) where the additive constant is read off.
const CONSTANT_RADIUS: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialExteriorSolution {
    n: usize,
    a: f64,
    r0: f64,
    u0: f64,
}

impl RadialExteriorSolution {
    pub fn new(n: usize, a: f64, r0: f64, u0: f64) -> Result<Self> {
        check_dim(n)?;
        if !(a >= 0.0) || !a.is_finite() {
            return Err(Error::domain(format!("mass parameter must be >= 0, got {a}")));
        }
        if !(r0 > 0.0) || !r0.is_finite() {
            return Err(Error::domain(format!("inner radius must be > 0, got {r0}")));
        }
        if !u0.is_finite() {
            return Err(Error::domain("u0 must be finite"));
        }
        Ok(Self { n, a, r0, u0 })
    }

    /// The member of the family whose additive constant vanishes (n ≥ 3).
    pub fn normalized(n: usize, a: f64, r0: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::domain("normalized radial solutions need n >= 3"));
        }
        let base = Self::new(n, a, r0, 0.0)?;
        let c = base.additive_constant();
        Self::new(n, a, r0, -c)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn r0(&self) -> f64 {
        self.r0
    }
    pub fn u0(&self) -> f64 {
        self.u0
    }

    fn check_radius(&self, r: f64) -> Result<()> {
        if r < self.r0 || !r.is_finite() {
            Err(Error::domain(format!(
                "radius {r} lies inside the excluded ball of radius {}",
                self.r0
            )))
        } else {
            Ok(())
        }
    }

    fn log1p_mass(&self, r: f64) -> f64 {
        (self.a * r.powi(-(self.n as i32))).ln_1p()
    }

    /// `u'/r − 1`.
    fn slope_excess(&self, r: f64) -> f64 {
        (self.log1p_mass(r) / self.n as f64).exp_m1()
    }

    /// `u'' − 1`.
    fn curvature_excess(&self, r: f64) -> f64 {
        ((1.0 / self.n as f64 - 1.0) * self.log1p_mass(r)).exp_m1()
    }

    /// `u'(r) − r`.
    fn excess(&self, r: f64) -> f64 {
        r * self.slope_excess(r)
    }

    /// `(u'(r), u''(r))`.
    pub fn derivatives(&self, r: f64) -> Result<(f64, f64)> {
        self.check_radius(r)?;
        Ok((r * (1.0 + self.slope_excess(r)), 1.0 + self.curvature_excess(r)))
    }

    /// `u(r) = u0 + ∫_{r0}^{r} (sⁿ + a)^{1/n} ds`.
    pub fn value_at(&self, r: f64) -> Result<f64> {
        self.check_radius(r)?;
        Ok(self.u0 + 0.5 * (r * r - self.r0 * self.r0) + self.integrate_excess(self.r0, r, VALUE_TOL))
    }

    /// `u(r) − ½r²`, without forming `u`.
    pub fn deviation_at(&self, r: f64) -> Result<f64> {
        self.check_radius(r)?;
        Ok(self.u0 - 0.5 * self.r0 * self.r0 + self.integrate_excess(self.r0, r, VALUE_TOL))
    }

    /// ∫_{lo}^{hi} (u'(s) − s) ds on dyadic panels.
    fn integrate_excess(&self, lo: f64, hi: f64, tol: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let mut edges = vec![lo];
        let mut e = lo;
        while e * 2.0 < hi {
            e *= 2.0;
            edges.push(e);
        }
        edges.push(hi);
        let panels = (edges.len() - 1) as f64;
        edges
            .windows(2)
            .map(|w| adaptive_gauss_legendre(|s| self.excess(s), w[0], w[1], tol / panels))
            .sum()
    }

    /// ∫_r^∞ (u'(s) − s) ds for n ≥ 3 via the substitution s = r/t.
    pub fn tail_integral(&self, r: f64) -> Result<f64> {
        if self.n < 3 {
            return Err(Error::domain("tail integral diverges for n = 2"));
        }
        self.check_radius(r)?;
        if self.a == 0.0 {
            return Ok(0.0);
        }
        let n = self.n as i32;
        let q = self.a * r.powi(-n);
        let scale = self.a * r.powi(2 - n) / self.n as f64;
        let integrand = |t: f64| {
            if t == 0.0 {
                return if n == 3 { r * r * q / 3.0 } else { 0.0 };
            }
            r * r * t.powi(-3) * ((q * t.powi(n)).ln_1p() / self.n as f64).exp_m1()
        };
        Ok(adaptive_gauss_legendre(
            integrand,
            0.0,
            1.0,
            1e-15 * scale.max(f64::MIN_POSITIVE),
        ))
    }

    /// Residue coefficient: a/(n(n−2)) for n ≥ 3, a/2 for n = 2.
    pub fn residue_coefficient(&self) -> f64 {
        if self.n == 2 {
            self.a / 2.0
        } else {
            self.a / (self.n * (self.n - 2)) as f64
        }
    }

    fn truncated_constant(&self, big_r: f64) -> f64 {
        let d = self.residue_coefficient();
        let base = self.u0 - 0.5 * self.r0 * self.r0 + self.integrate_excess(self.r0, big_r, 1e-13);
        if self.n == 2 {
            base - d * big_r.ln()
        } else {
            base + d * big_r.powi(2 - self.n as i32)
        }
    }

    /// `c = lim (u − ½r² + d r^{2−n})` (n ≥ 3) or `lim (u − ½r² − d log r)`
    /// (n = 2), read off at 10⁴·r0 and 2·10⁴·r0 and Richardson-extrapolated
    /// against the `r^{2−2n}` tail.
    pub fn additive_constant(&self) -> f64 {
        let big_r = CONSTANT_RADIUS * self.r0;
        let c1 = self.truncated_constant(big_r);
        let c2 = self.truncated_constant(2.0 * big_r);
        let factor = 2f64.powi(2 * self.n as i32 - 2);
        (factor * c2 - c1) / (factor - 1.0)
    }

    /// Analytic far-field expansion: A = I, b = 0, residue coefficient d,
    /// additive constant c, tail order 2 − 2n.
    pub fn expansion(&self) -> AsymptoticExpansion {
        AsymptoticExpansion {
            n: self.n,
            a: SpdUnimodular::identity(self.n),
            scale: 1.0,
            b: DVector::zeros(self.n),
            c: self.additive_constant(),
            d: self.residue_coefficient(),
            dipole: None,
            error_order: Some(2.0 - 2.0 * self.n as f64),
            shells: Vec::new(),
        }
    }

    /// Hessian in Cartesian coordinates at x with |x| = r.
    fn cartesian_hessian(&self, x: &[f64], curvature: f64, slope: f64) -> DMatrix<f64> {
        let r = norm(x);
        let xh = DVector::from_column_slice(x) / r;
        let proj = &xh * xh.transpose();
        let n = self.n;
        &proj * curvature + (DMatrix::identity(n, n) - proj) * slope
    }
}

/// Closed-form derivative pair for the radial family.
pub fn radial_derivatives(sol: &RadialExteriorSolution, r: f64) -> Result<(f64, f64)> {
    sol.derivatives(r)
}

/// Value of the radial solution at radius `r`.
pub fn radial_value(sol: &RadialExteriorSolution, r: f64) -> Result<f64> {
    sol.value_at(r)
}

/// Far-field expansion of the radial solution.
pub fn radial_expansion(sol: &RadialExteriorSolution) -> AsymptoticExpansion {
    sol.expansion()
}

impl ScalarField for RadialExteriorSolution {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.value_at(norm(x))
    }

    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        let r = norm(x);
        let (du, _) = self.derivatives(r)?;
        Ok(DVector::from_column_slice(x) * (du / r))
    }

    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let r = norm(x);
        let (du, d2u) = self.derivatives(r)?;
        Ok(self.cartesian_hessian(x, d2u, du / r))
    }
}

/// `E = u − ½|x|² − c` for a radial solution with n ≥ 3, using the exact
/// tail integral so that E keeps relative precision as |x| → ∞.
#[derive(Debug, Clone, Copy)]
pub struct RadialDeviation {
    sol: RadialExteriorSolution,
}

impl RadialDeviation {
    pub fn new(sol: RadialExteriorSolution) -> Result<Self> {
        if sol.n < 3 {
            return Err(Error::domain("radial deviation field needs n >= 3"));
        }
        Ok(Self { sol })
    }

    pub fn solution(&self) -> &RadialExteriorSolution {
        &self.sol
    }

    /// Analytic Laplacian ΔE = u'' + (n−1)u'/r − n.
    pub fn laplacian_at(&self, r: f64) -> Result<f64> {
        self.sol.check_radius(r)?;
        let n = self.sol.n as f64;
        Ok(self.sol.curvature_excess(r) + (n - 1.0) * self.sol.slope_excess(r))
    }
}

impl ScalarField for RadialDeviation {
    fn dim(&self) -> usize {
        self.sol.n
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(-self.sol.tail_integral(norm(x))?)
    }

    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        let r = norm(x);
        self.sol.check_radius(r)?;
        Ok(DVector::from_column_slice(x) * self.sol.slope_excess(r))
    }

    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let r = norm(x);
        self.sol.check_radius(r)?;
        Ok(self
            .sol
            .cartesian_hessian(x, self.sol.curvature_excess(r), self.sol.slope_excess(r)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sol(n: usize, a: f64, r0: f64, u0: f64) -> RadialExteriorSolution {
        RadialExteriorSolution::new(n, a, r0, u0).unwrap()
    }

    #[test]
    fn derivative_examples() {
        let (d1, d2) = sol(3, 0.0, 1.0, 0.0).derivatives(2.0).unwrap();
        assert_eq!((d1, d2), (2.0, 1.0));

        let (d1, d2) = sol(3, 1.0, 1.0, 0.0).derivatives(1.0).unwrap();
        assert!((d1 - 2f64.powf(1.0 / 3.0)).abs() < 1e-15);
        assert!((d2 - 2f64.powf(-2.0 / 3.0)).abs() < 1e-15);
        assert!((d2 * d1 * d1 - 1.0).abs() < 1e-15);

        let (d1, d2) = sol(2, 3.0, 1.0, 0.0).derivatives(1.0).unwrap();
        assert!((d1 - 2.0).abs() < 1e-15 && (d2 - 0.5).abs() < 1e-15);
        assert!((d2 * d1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inside_excluded_ball_is_rejected() {
        let s = sol(3, 1.0, 1.0, 0.0);
        assert!(matches!(s.derivatives(0.5), Err(Error::Domain(_))));
        assert!(matches!(s.value_at(0.99), Err(Error::Domain(_))));
    }

    #[test]
    fn negative_mass_is_rejected() {
        assert!(RadialExteriorSolution::new(3, -0.1, 1.0, 0.0).is_err());
        assert!(RadialExteriorSolution::new(3, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn quadratic_member_value() {
        let v = sol(3, 0.0, 1.0, 0.5).value_at(3.0).unwrap();
        assert!((v - 4.5).abs() < 1e-14);
    }

    #[test]
    fn two_dimensional_value_against_antiderivative() {
        let anti = |s: f64| s * (s * s + 1.0).sqrt() / 2.0 + s.asinh() / 2.0;
        let v = sol(2, 1.0, 1.0, 0.0).value_at(2.0).unwrap();
        assert!((v - (anti(2.0) - anti(1.0))).abs() < 1e-12);
    }

    #[test]
    fn pde_residual_vanishes() {
        for n in 2..=6 {
            let s = sol(n, 1.7, 1.0, 0.0);
            for k in 0..50 {
                let r = 1.0 + 99.0 * k as f64 / 49.0;
                let (d1, d2) = s.derivatives(r).unwrap();
                let res = d2 * (d1 / r).powi(n as i32 - 1) - 1.0;
                assert!(res.abs() < 1e-14, "n={n} r={r} res={res}");
            }
        }
    }

    #[test]
    fn residue_coefficients() {
        assert_eq!(sol(3, 0.0, 1.0, 0.0).residue_coefficient(), 0.0);
        assert!((sol(3, 1.0, 1.0, 0.0).residue_coefficient() - 1.0 / 3.0).abs() < 1e-16);
        assert!((sol(2, 1.0, 1.0, 0.0).residue_coefficient() - 0.5).abs() < 1e-16);
    }

    #[test]
    fn quadratic_member_constant() {
        let s = sol(3, 0.0, 1.5, 2.0);
        assert!((s.additive_constant() - (2.0 - 0.5 * 2.25)).abs() < 1e-13);
    }

    #[test]
    fn normalized_member_has_zero_constant() {
        let s = RadialExteriorSolution::normalized(3, 1.0, 1.0).unwrap();
        assert!(s.additive_constant().abs() < 1e-12);
        // E from the tail integral agrees with u − ½r² when c = 0.
        let e = RadialDeviation::new(s).unwrap();
        for r in [1.0, 2.0, 7.5, 30.0] {
            let direct = s.deviation_at(r).unwrap();
            let tail = e.value(&[r, 0.0, 0.0]).unwrap();
            assert!((direct - tail).abs() < 1e-12, "r={r}: {direct} vs {tail}");
        }
    }

    #[test]
    fn residue_coefficient_increases_with_mass() {
        let ds: Vec<f64> = [0.0, 0.5, 1.0, 2.0]
            .iter()
            .map(|&a| sol(4, a, 1.0, 0.0).residue_coefficient())
            .collect();
        assert!(ds.windows(2).all(|w| w[1] > w[0]));
    }
}
