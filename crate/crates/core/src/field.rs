//! Scalar fields on (subsets of) ℝⁿ with gradients and Hessians.
//!
//! Analytic fields override the derivative methods; anything else falls
//! back to Richardson-extrapolated central differences of `value`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        fd_gradient(&|y: &[f64]| self.value(y), x)
    }

    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        fd_hessian(&|y: &[f64]| self.value(y), x)
    }
}

impl<T: ScalarField + ?Sized> ScalarField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        (**self).gradient(x)
    }
    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        (**self).hessian(x)
    }
}

impl<T: ScalarField + ?Sized> ScalarField for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        (**self).gradient(x)
    }
    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        (**self).hessian(x)
    }
}

impl<T: ScalarField + ?Sized> ScalarField for std::sync::Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        (**self).gradient(x)
    }
    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        (**self).hessian(x)
    }
}

/// Step used for first derivatives: `max(1e-4·|x|, 1e-6)`.
pub fn derivative_step(x: &[f64]) -> f64 {
    (1e-4 * norm(x)).max(1e-6)
}

fn hessian_step(x: &[f64]) -> f64 {
    (2e-3 * norm(x)).max(1e-4)
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

type ValueFn<'a> = dyn Fn(&[f64]) -> Result<f64> + 'a;

fn shifted(x: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut y = x.to_vec();
    for &(i, d) in moves {
        y[i] += d;
    }
    y
}

/// Central-difference gradient with one Richardson step.
pub fn fd_gradient(f: &ValueFn<'_>, x: &[f64]) -> Result<DVector<f64>> {
    let h = derivative_step(x);
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() {
        let d = |s: f64| -> Result<f64> { Ok((f(&shifted(x, &[(i, s)]))? - f(&shifted(x, &[(i, -s)]))?) / (2.0 * s)) };
        let coarse = d(h)?;
        let fine = d(0.5 * h)?;
        g[i] = (4.0 * fine - coarse) / 3.0;
    }
    Ok(g)
}

/// Central-difference Hessian with one Richardson step.
pub fn fd_hessian(f: &ValueFn<'_>, x: &[f64]) -> Result<DMatrix<f64>> {
    let h = hessian_step(x);
    let n = x.len();
    let f0 = f(x)?;
    let second = |i: usize, j: usize, s: f64| -> Result<f64> {
        if i == j {
            let p = f(&shifted(x, &[(i, s)]))?;
            let m = f(&shifted(x, &[(i, -s)]))?;
            Ok((p - 2.0 * f0 + m) / (s * s))
        } else {
            let pp = f(&shifted(x, &[(i, s), (j, s)]))?;
            let pm = f(&shifted(x, &[(i, s), (j, -s)]))?;
            let mp = f(&shifted(x, &[(i, -s), (j, s)]))?;
            let mm = f(&shifted(x, &[(i, -s), (j, -s)]))?;
            Ok((pp - pm - mp + mm) / (4.0 * s * s))
        }
    };
    let mut hm = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let coarse = second(i, j, h)?;
            let fine = second(i, j, 0.5 * h)?;
            let v = (4.0 * fine - coarse) / 3.0;
            hm[(i, j)] = v;
            hm[(j, i)] = v;
        }
    }
    Ok(hm)
}

/// A value-only field given by a closure; derivatives by finite differences.
pub struct FnField<F> {
    n: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64]) -> Result<f64> + Send + Sync,
{
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F> ScalarField for FnField<F>
where
    F: Fn(&[f64]) -> Result<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        (self.f)(x)
    }
}

fn nonzero_radius(x: &[f64]) -> Result<f64> {
    let r = norm(x);
    if r == 0.0 {
        Err(Error::domain("field is singular at the origin"))
    } else {
        Ok(r)
    }
}

/// `coeff·|x|^{2−n}`, the fundamental harmonic (for n = 2, `coeff·log|x|`).
#[derive(Debug, Clone, Copy)]
pub struct FundamentalHarmonic {
    pub n: usize,
    pub coeff: f64,
}

impl ScalarField for FundamentalHarmonic {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let r = nonzero_radius(x)?;
        Ok(if self.n == 2 {
            self.coeff * r.ln()
        } else {
            self.coeff * r.powi(2 - self.n as i32)
        })
    }

    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        let r = nonzero_radius(x)?;
        let s = (2.0 - self.n as f64) * r.powi(-(self.n as i32));
        let s = if self.n == 2 { r.powi(-2) } else { s };
        Ok(DVector::from_column_slice(x) * (self.coeff * s))
    }

    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let r = nonzero_radius(x)?;
        let n = self.n;
        let nf = n as f64;
        // D²(r^{2-n}) = (2-n) r^{-n} (I - n x̂x̂'); the log case is the n = 2 analogue.
        let (lead, radial) = if n == 2 {
            (r.powi(-2), 2.0)
        } else {
            ((2.0 - nf) * r.powi(-(n as i32)), nf)
        };
        let xv = DVector::from_column_slice(x) / r;
        let h = DMatrix::identity(n, n) - &xv * xv.transpose() * radial;
        Ok(h * (self.coeff * lead))
    }
}

/// `½|x|² + c̃|x|^{2−n}`: the model far field of the Kelvin argument.
#[derive(Debug, Clone, Copy)]
pub struct PerturbedQuadratic {
    pub n: usize,
    pub c_tilde: f64,
}

impl PerturbedQuadratic {
    fn harmonic(&self) -> FundamentalHarmonic {
        FundamentalHarmonic {
            n: self.n,
            coeff: self.c_tilde,
        }
    }
}

impl ScalarField for PerturbedQuadratic {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(0.5 * norm(x).powi(2) + self.harmonic().value(x)?)
    }
    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(DVector::from_column_slice(x) + self.harmonic().gradient(x)?)
    }
    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(self.n, self.n) + self.harmonic().hessian(x)?)
    }
}

/// `p·x / |x|ⁿ`, the dipole harmonic.
#[derive(Debug, Clone)]
pub struct DipoleHarmonic {
    pub moment: DVector<f64>,
}

impl ScalarField for DipoleHarmonic {
    fn dim(&self) -> usize {
        self.moment.len()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let r = nonzero_radius(x)?;
        let xv = DVector::from_column_slice(x);
        Ok(self.moment.dot(&xv) * r.powi(-(self.dim() as i32)))
    }

    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        let r = nonzero_radius(x)?;
        let n = self.dim() as i32;
        let xv = DVector::from_column_slice(x);
        let px = self.moment.dot(&xv);
        Ok(&self.moment * r.powi(-n) - xv * (n as f64 * px * r.powi(-n - 2)))
    }
}
