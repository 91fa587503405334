//! Dense linear algebra for small symmetric positive-definite matrices:
//! unimodular normalization, quadratic profiles and affine maps.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;

/// Largest dimension supported by the analytic modules.
pub const MAX_DIM: usize = 6;

const ASYMMETRY_TOL: f64 = 1e-8;
const JACOBI_TOL: f64 = 1e-12;
const UNIMODULAR_TOL: f64 = 1e-10;

pub(crate) fn check_dim(n: usize) -> Result<()> {
    if (2..=MAX_DIM).contains(&n) {
        Ok(())
    } else {
        Err(Error::domain(format!("dimension must lie in 2..={MAX_DIM}, got {n}")))
    }
}

/// Symmetrize `m`, rejecting inputs whose relative asymmetry exceeds 1e-8.
pub fn symmetrize(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::domain(format!(
            "matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let skew = (m - m.transpose()).norm() / scale;
    if skew > ASYMMETRY_TOL {
        return Err(Error::domain(format!(
            "matrix is not symmetric (relative asymmetry {skew:.3e})"
        )));
    }
    Ok((m + m.transpose()) * 0.5)
}

/// Eigenvalues (unsorted) and eigenvectors (columns) of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Cyclic Jacobi iteration with row-by-row sweep order.
///
/// Sweeps stop once the off-diagonal Frobenius norm falls below 1e-12
/// times the norm of the input.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> SymmetricEigen {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    SymmetricEigen {
        values: a.diagonal(),
        vectors: v,
    }
}

/// Symmetric positive-definite matrix with unit determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdUnimodular {
    matrix: DMatrix<f64>,
}

impl SpdUnimodular {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_dim(m.nrows())?;
        let sym = symmetrize(&m)?;
        let eig = jacobi_eigen(&sym);
        if eig.values.iter().any(|&l| l <= 0.0) {
            return Err(Error::domain("matrix is not positive definite"));
        }
        let det: f64 = eig.values.iter().product();
        if (det - 1.0).abs() > UNIMODULAR_TOL {
            return Err(Error::domain(format!("matrix determinant is {det}, expected 1")));
        }
        Ok(Self { matrix: sym })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// `x'Ax`.
    pub fn quadratic_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.matrix * x))
    }

    /// Symmetric square root `A^{1/2}`.
    pub fn sqrt(&self) -> DMatrix<f64> {
        let eig = jacobi_eigen(&self.matrix);
        let d = DMatrix::from_diagonal(&eig.values.map(f64::sqrt));
        &eig.vectors * d * eig.vectors.transpose()
    }
}

/// Divide a symmetric positive-definite matrix by `det^{1/n}`.
///
/// Returns the unimodular part and the scale `det(A_raw)^{1/n}`.
pub fn normalize_quadratic(a_raw: &DMatrix<f64>) -> Result<(SpdUnimodular, f64)> {
    let sym = symmetrize(a_raw)?;
    let n = sym.nrows();
    check_dim(n)?;
    let eig = jacobi_eigen(&sym);
    if eig.values.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
        return Err(Error::domain("quadratic part is not positive definite"));
    }
    let log_det: f64 = eig.values.iter().map(|l| l.ln()).sum();
    let scale = (log_det / n as f64).exp();
    let a = sym / scale;
    Ok((SpdUnimodular::new(a)?, scale))
}

/// `½x'Ax + b·x + c` with unimodular `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProfile {
    pub a: SpdUnimodular,
    pub b: DVector<f64>,
    pub c: f64,
}

impl QuadraticProfile {
    pub fn new(a: SpdUnimodular, b: DVector<f64>, c: f64) -> Result<Self> {
        if b.len() != a.dim() {
            return Err(Error::domain("linear coefficient has wrong length"));
        }
        Ok(Self { a, b, c })
    }

    /// `½|x|²`.
    pub fn standard(n: usize) -> Self {
        Self {
            a: SpdUnimodular::identity(n),
            b: DVector::zeros(n),
            c: 0.0,
        }
    }
}

impl ScalarField for QuadraticProfile {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let x = DVector::from_column_slice(x);
        Ok(0.5 * self.a.quadratic_form(&x) + self.b.dot(&x) + self.c)
    }

    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        let x = DVector::from_column_slice(x);
        Ok(self.a.matrix() * x + &self.b)
    }

    fn hessian(&self, _x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.a.matrix().clone())
    }
}

/// `x ↦ Tx + shift` with `det T = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AffineMapRecord", into = "AffineMapRecord")]
pub struct AffineMap {
    t: DMatrix<f64>,
    shift: DVector<f64>,
}

impl AffineMap {
    pub fn new(t: DMatrix<f64>, shift: DVector<f64>) -> Result<Self> {
        if !t.is_square() || t.nrows() != shift.len() {
            return Err(Error::domain("affine map has inconsistent shapes"));
        }
        check_dim(t.nrows())?;
        let det = t.determinant();
        if (det - 1.0).abs() > UNIMODULAR_TOL {
            return Err(Error::domain(format!("affine map must have det T = 1, got {det}")));
        }
        Ok(Self { t, shift })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            t: DMatrix::identity(n, n),
            shift: DVector::zeros(n),
        }
    }

    pub fn translation(shift: DVector<f64>) -> Result<Self> {
        let n = shift.len();
        Self::new(DMatrix::identity(n, n), shift)
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn shift(&self) -> &DVector<f64> {
        &self.shift
    }

    pub fn apply(&self, x: &[f64]) -> DVector<f64> {
        &self.t * DVector::from_column_slice(x) + &self.shift
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::domain("affine map is singular"))?;
        let shift = -(&inv * &self.shift);
        Self::new(inv, shift)
    }
}

#[derive(Serialize, Deserialize)]
struct AffineMapRecord {
    t: Vec<Vec<f64>>,
    shift: Vec<f64>,
}

impl TryFrom<AffineMapRecord> for AffineMap {
    type Error = Error;

    fn try_from(r: AffineMapRecord) -> Result<Self> {
        let t = matrix_from_rows(&r.t)?;
        AffineMap::new(t, DVector::from_vec(r.shift))
    }
}

impl From<AffineMap> for AffineMapRecord {
    fn from(m: AffineMap) -> Self {
        AffineMapRecord {
            t: matrix_rows(&m.t),
            shift: m.shift.iter().copied().collect(),
        }
    }
}

/// `v(x) = u(Tx + shift)`; solves det(D²v) = 1 whenever `u` does.
#[derive(Debug, Clone)]
pub struct Pushforward<F> {
    pub inner: F,
    pub map: AffineMap,
}

impl<F: ScalarField> ScalarField for Pushforward<F> {
    fn dim(&self) -> usize {
        self.map.dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.inner.value(self.map.apply(x).as_slice())
    }

    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        let g = self.inner.gradient(self.map.apply(x).as_slice())?;
        Ok(self.map.linear().transpose() * g)
    }

    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let h = self.inner.hessian(self.map.apply(x).as_slice())?;
        let t = self.map.linear();
        Ok(t.transpose() * h * t)
    }
}

/// Compose `u` with an affine map.
pub fn pushforward_solution<F: ScalarField>(u: F, map: AffineMap) -> Pushforward<F> {
    Pushforward { inner: u, map }
}

/// Rows of a dense matrix as nested vectors.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Build a dense matrix from row vectors.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Format("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// True if all leading principal minors are positive (Cholesky succeeds).
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.clone().cholesky().is_some()
}
