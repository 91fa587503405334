//! Recovery of the far-field expansion
//! u ≈ ½x'Ax + b·x + c − d·ρ^{2−n} + p·x/ρⁿ, ρ = √(x'Ax), det A = 1, from
//! shell samples (n = 2 uses + d·log ρ and no dipole).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::flux::{qmc_sphere, ResidueResult};
use crate::linalg::{check_dim, matrix_from_rows, matrix_rows, normalize_quadratic, SpdUnimodular};
use crate::numerics::power_law_fit;

pub const MIN_SHELLS: usize = 5;
pub const MIN_POINTS_PER_SHELL: usize = 40;
/// Column-equilibrated condition number above which a fit is rejected.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Allowed excess of the fitted tail exponent over 1 − n.
pub const ORDER_SLACK: f64 = 0.2;

const MAX_REFINEMENTS: usize = 50;
const REFINEMENT_TOL: f64 = 1e-14;
/// Annihilated residuals below this many ulps of the sampled values count as rounding noise.
const NOISE_ULPS: f64 = 16.0;
/// Annihilator windows required before the quadratic exponents join it.
const MIN_ORDER_WINDOWS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    Analytic,
    Grid,
}

/// Samples on one radius shell.
#[derive(Debug, Clone, PartialEq)]
pub struct Shell {
    pub radius: f64,
    pub points: Vec<DVector<f64>>,
    pub values: Vec<f64>,
}

/// Far-field samples grouped in shells of increasing radius.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    n: usize,
    inner_radius: f64,
    source: SampleSource,
    shells: Vec<Shell>,
}

impl SampleSet {
    /// Validates the shell layout: at least 5 shells of at least 40 points,
    /// every point at distance ≥ 2·`inner_radius` from the origin.
    pub fn new(n: usize, inner_radius: f64, source: SampleSource, mut shells: Vec<Shell>) -> Result<Self> {
        check_dim(n)?;
        if !(inner_radius >= 0.0) {
            return Err(Error::domain("inner radius must be non-negative"));
        }
        if shells.len() < MIN_SHELLS {
            return Err(Error::domain(format!(
                "{} shells given, at least {MIN_SHELLS} required",
                shells.len()
            )));
        }
        shells.sort_by(|a, b| a.radius.total_cmp(&b.radius));
        for s in &shells {
            if s.points.len() != s.values.len() {
                return Err(Error::domain("shell has mismatched points and values"));
            }
            if s.points.len() < MIN_POINTS_PER_SHELL {
                return Err(Error::domain(format!(
                    "shell r={} has {} points, at least {MIN_POINTS_PER_SHELL} required",
                    s.radius,
                    s.points.len()
                )));
            }
            for (p, v) in s.points.iter().zip(&s.values) {
                if p.len() != n || !v.is_finite() {
                    return Err(Error::domain(format!("invalid sample on shell r={}", s.radius)));
                }
                if p.norm() < 2.0 * inner_radius * (1.0 - 1e-12) {
                    return Err(Error::domain(format!(
                        "sample at |x|={} is closer than twice the inner radius {inner_radius}",
                        p.norm()
                    )));
                }
            }
        }
        if shells.windows(2).any(|w| w[1].radius <= w[0].radius) {
            return Err(Error::domain("shell radii must be distinct"));
        }
        Ok(Self {
            n,
            inner_radius,
            source,
            shells,
        })
    }

    /// Samples `field` at `points_per_shell` directions (shared by all shells) on each radius.
    pub fn from_field(
        field: &dyn ScalarField,
        radii: &[f64],
        points_per_shell: usize,
        inner_radius: f64,
        source: SampleSource,
    ) -> Result<Self> {
        let n = field.dim();
        check_dim(n)?;
        let dirs = shell_directions(n, points_per_shell);
        let shells = radii
            .iter()
            .map(|&r| {
                let points: Vec<DVector<f64>> = dirs.iter().map(|w| w * r).collect();
                let values = points
                    .par_iter()
                    .map(|p| field.value(p.as_slice()))
                    .collect::<Result<Vec<f64>>>()?;
                Ok(Shell {
                    radius: r,
                    points,
                    values,
                })
            })
            .collect::<Result<Vec<Shell>>>()?;
        Self::new(n, inner_radius, source, shells)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    pub fn source(&self) -> SampleSource {
        self.source
    }

    pub fn shells(&self) -> &[Shell] {
        &self.shells
    }

    /// Smallest and largest shell radius.
    pub fn radius_range(&self) -> (f64, f64) {
        (self.shells[0].radius, self.shells[self.shells.len() - 1].radius)
    }

    pub fn len(&self) -> usize {
        self.shells.iter().map(|s| s.points.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn points(&self) -> impl Iterator<Item = (&DVector<f64>, f64)> {
        self.shells
            .iter()
            .flat_map(|s| s.points.iter().zip(s.values.iter().copied()))
    }
}

/// Deterministic, roughly uniform unit directions: equal angles (n = 2),
/// a Fibonacci lattice (n = 3), Halton points pushed to the sphere (n ≥ 4).
pub fn shell_directions(n: usize, m: usize) -> Vec<DVector<f64>> {
    match n {
        2 => (0..m)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / m as f64;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..m)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / m as f64;
                    let s = (1.0 - z * z).sqrt();
                    let t = golden * i as f64;
                    DVector::from_vec(vec![s * t.cos(), s * t.sin(), z])
                })
                .collect()
        }
        _ => qmc_sphere(n, m, 1, 0)
            .remove(0)
            .into_iter()
            .map(|(w, _)| DVector::from_vec(w))
            .collect(),
    }
}

/// Per-shell residual statistics of a fitted expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellSummary {
    pub radius: f64,
    pub points: usize,
    pub rms_residual: f64,
    pub max_residual: f64,
}

/// ½x'Ax + b·x + c − d·ρ^{2−n} + p·x/ρⁿ (n ≥ 3) or ½x'Ax + b·x + c + d·log ρ (n = 2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExpansionRecord", into = "ExpansionRecord")]
pub struct AsymptoticExpansion {
    pub n: usize,
    pub a: SpdUnimodular,
    /// det^{1/n} of the fitted quadratic Hessian before normalization.
    /// Diagnostic only: the model uses the unimodular `a`, and solutions of
    /// det D²u = 1 have scale 1.
    pub scale: f64,
    pub b: DVector<f64>,
    pub c: f64,
    /// Residue coefficient.
    pub d: f64,
    pub dipole: Option<DVector<f64>>,
    /// Fitted exponent of the remaining tail; `None` when no tail is resolvable above rounding.
    pub error_order: Option<f64>,
    pub shells: Vec<ShellSummary>,
}

impl AsymptoticExpansion {
    /// Expansion with unit scale, no dipole and no fit metadata.
    pub fn new(a: SpdUnimodular, b: DVector<f64>, c: f64, d: f64) -> Result<Self> {
        let n = a.dim();
        if b.len() != n {
            return Err(Error::domain("linear coefficient has wrong length"));
        }
        Ok(Self {
            n,
            a,
            scale: 1.0,
            b,
            c,
            d,
            dipole: None,
            error_order: None,
            shells: Vec::new(),
        })
    }

    /// `½|x|²`.
    pub fn quadratic(n: usize) -> Self {
        Self::new(SpdUnimodular::identity(n), DVector::zeros(n), 0.0, 0.0).expect("identity is valid")
    }

    pub fn with_dipole(mut self, p: DVector<f64>) -> Result<Self> {
        if p.len() != self.n || self.n < 3 {
            return Err(Error::domain("dipole needs n ≥ 3 and length n"));
        }
        self.dipole = Some(p);
        Ok(self)
    }

    /// "power" for n ≥ 3, "log" for n = 2.
    pub fn model_tag(&self) -> &'static str {
        model_tag(self.n)
    }

    /// Upper bound 1 − n + 0.2 on an acceptable tail exponent.
    pub fn order_bound(&self) -> f64 {
        1.0 - self.n as f64 + ORDER_SLACK
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn check_point(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.n {
            return Err(Error::domain(format!(
                "point has dimension {}, expected {}",
                x.len(),
                self.n
            )));
        }
        let v = DVector::from_column_slice(x);
        if self.a.quadratic_form(&v) <= 0.0 {
            return Err(Error::domain("expansion is singular at the origin"));
        }
        Ok(v)
    }

    fn tail(&self, x: &DVector<f64>) -> f64 {
        let rho = self.a.quadratic_form(x).sqrt();
        let mut t = self.c + self.d * residue_basis(self.n, rho);
        if let Some(p) = &self.dipole {
            t += p.dot(x) * rho.powi(-(self.n as i32));
        }
        t
    }
}

fn model_tag(n: usize) -> &'static str {
    if n == 2 {
        "log"
    } else {
        "power"
    }
}

/// Coefficient function of d: −ρ^{2−n} for n ≥ 3, log ρ for n = 2.
fn residue_basis(n: usize, rho: f64) -> f64 {
    if n == 2 {
        rho.ln()
    } else {
        -rho.powi(2 - n as i32)
    }
}

/// Gradient and Hessian of ρᵏ, with y = Ax.
fn rho_power_derivatives(a: &DMatrix<f64>, x: &DVector<f64>, k: f64) -> (DVector<f64>, DMatrix<f64>) {
    let y = a * x;
    let rho2 = x.dot(&y);
    let g = &y * (k * rho2.powf(k / 2.0 - 1.0));
    let h = a * (k * rho2.powf(k / 2.0 - 1.0)) + &y * y.transpose() * (k * (k - 2.0) * rho2.powf(k / 2.0 - 2.0));
    (g, h)
}

impl ScalarField for AsymptoticExpansion {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let v = self.check_point(x)?;
        Ok(0.5 * self.a.quadratic_form(&v) + self.b.dot(&v) + self.tail(&v))
    }

    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(self.derivatives(x)?.0)
    }

    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.derivatives(x)?.1)
    }
}

impl AsymptoticExpansion {
    fn derivatives(&self, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let v = self.check_point(x)?;
        let a = self.a.matrix();
        let n = self.n as f64;
        let mut g = a * &v + &self.b;
        let mut h = a.clone();
        if self.n == 2 {
            let (g2, h2) = rho_power_derivatives(a, &v, 2.0);
            // log ρ = ½ log ρ², so the derivatives follow from those of ρ².
            let rho2 = self.a.quadratic_form(&v);
            g += &g2 * (0.5 * self.d / rho2);
            h += (&h2 / rho2 - &g2 * g2.transpose() / (rho2 * rho2)) * (0.5 * self.d);
        } else {
            let (gk, hk) = rho_power_derivatives(a, &v, 2.0 - n);
            g -= &gk * self.d;
            h -= &hk * self.d;
        }
        if let Some(p) = &self.dipole {
            let rho2 = self.a.quadratic_form(&v);
            let (gk, hk) = rho_power_derivatives(a, &v, -n);
            let px = p.dot(&v);
            g += p * rho2.powf(-n / 2.0) + &gk * px;
            h += p * gk.transpose() + &gk * p.transpose() + hk * px;
        }
        Ok((g, h))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpansionRecord {
    n: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: f64,
    d: f64,
    dipole: Option<Vec<f64>>,
    error_order: Option<f64>,
    shells: Vec<ShellSummary>,
    scale: f64,
    model: String,
}

impl TryFrom<ExpansionRecord> for AsymptoticExpansion {
    type Error = Error;

    fn try_from(r: ExpansionRecord) -> Result<Self> {
        let a = SpdUnimodular::new(matrix_from_rows(&r.a)?)?;
        if a.dim() != r.n {
            return Err(Error::Format("A does not match n".into()));
        }
        if r.model != model_tag(r.n) {
            return Err(Error::Format(format!("model '{}' does not match n = {}", r.model, r.n)));
        }
        let mut e = AsymptoticExpansion::new(a, DVector::from_vec(r.b), r.c, r.d)?;
        if let Some(p) = r.dipole {
            e = e.with_dipole(DVector::from_vec(p))?;
        }
        e.scale = r.scale;
        e.error_order = r.error_order;
        e.shells = r.shells;
        Ok(e)
    }
}

impl From<AsymptoticExpansion> for ExpansionRecord {
    fn from(e: AsymptoticExpansion) -> Self {
        ExpansionRecord {
            n: e.n,
            a: matrix_rows(e.a.matrix()),
            b: e.b.iter().copied().collect(),
            c: e.c,
            d: e.d,
            dipole: e.dipole.map(|p| p.iter().copied().collect()),
            error_order: e.error_order,
            shells: e.shells,
            scale: e.scale,
            model: model_tag(e.n).to_string(),
        }
    }
}

/// Model terms included in the tail fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    /// Fit the p·x/ρⁿ term (n ≥ 3 only).
    pub dipole: bool,
    /// Keep the d term; when false the reported expansion has d = 0 and the
    /// remaining coefficients of the full fit.
    pub residue_term: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            dipole: true,
            residue_term: true,
        }
    }
}

/// Least-squares solution with its column-equilibrated condition number.
fn least_squares(design: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let scales: Vec<f64> = design.column_iter().map(|c| c.norm()).collect();
    if scales.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::IllConditioned {
            condition: f64::INFINITY,
        });
    }
    let mut scaled = design.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = smax / smin;
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::IllConditioned { condition });
    }
    let y = svd.solve(rhs, 0.0).map_err(|e| Error::LinearSolve(e.to_string()))?;
    Ok(DVector::from_fn(y.len(), |j, _| y[j] / scales[j]))
}

struct QuadraticPart {
    a: SpdUnimodular,
    scale: f64,
    b: DVector<f64>,
}

/// Stage (i)+(ii): quadratic least squares on the two largest shells, then normalization.
fn fit_quadratic(samples: &SampleSet, tail: &dyn Fn(&DVector<f64>) -> f64) -> Result<QuadraticPart> {
    let n = samples.n;
    let k = samples.shells.len();
    let pts: Vec<(&DVector<f64>, f64)> = samples.shells[k - 2..]
        .iter()
        .flat_map(|s| s.points.iter().zip(s.values.iter().copied()))
        .collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let cols = pairs.len() + n + 1;
    let mut design = DMatrix::zeros(pts.len(), cols);
    let mut rhs = DVector::zeros(pts.len());
    for (row, (x, u)) in pts.iter().enumerate() {
        for (c, &(i, j)) in pairs.iter().enumerate() {
            design[(row, c)] = x[i] * x[j];
        }
        for i in 0..n {
            design[(row, pairs.len() + i)] = x[i];
        }
        design[(row, cols - 1)] = 1.0;
        rhs[row] = u - tail(x);
    }
    let coef = least_squares(&design, &rhs)?;
    let mut a_raw = DMatrix::zeros(n, n);
    for (c, &(i, j)) in pairs.iter().enumerate() {
        if i == j {
            a_raw[(i, i)] = 2.0 * coef[c];
        } else {
            a_raw[(i, j)] = coef[c];
            a_raw[(j, i)] = coef[c];
        }
    }
    let (a, scale) = normalize_quadratic(&a_raw)?;
    let b = DVector::from_fn(n, |i, _| coef[pairs.len() + i]);
    Ok(QuadraticPart { a, scale, b })
}

/// Stage (iii): (c, d, dipole) on all shells with the quadratic part fixed.
fn fit_tail(samples: &SampleSet, q: &QuadraticPart, dipole: bool) -> Result<(f64, f64, Option<DVector<f64>>)> {
    let n = samples.n;
    let cols = 2 + if dipole { n } else { 0 };
    let m = samples.len();
    let mut design = DMatrix::zeros(m, cols);
    let mut rhs = DVector::zeros(m);
    for (row, (x, u)) in samples.points().enumerate() {
        let rho = q.a.quadratic_form(x).sqrt();
        design[(row, 0)] = 1.0;
        design[(row, 1)] = residue_basis(n, rho);
        if dipole {
            let w = rho.powi(-(n as i32));
            for j in 0..n {
                design[(row, 2 + j)] = x[j] * w;
            }
        }
        rhs[row] = u - 0.5 * q.a.quadratic_form(x) - q.b.dot(x);
    }
    let coef = least_squares(&design, &rhs)?;
    let p = dipole.then(|| DVector::from_fn(n, |j, _| coef[2 + j]));
    Ok((coef[0], coef[1], p))
}

/// Fit with default options (dipole on for n ≥ 3, d term on).
pub fn fit_expansion(samples: &SampleSet, n: usize) -> Result<AsymptoticExpansion> {
    fit_expansion_with(samples, n, &FitOptions::default())
}

/// Three-stage fit refined by alternation: the quadratic part is refitted
/// on the two largest shells after subtracting the current tail until the
/// coefficients stop changing.
pub fn fit_expansion_with(samples: &SampleSet, n: usize, options: &FitOptions) -> Result<AsymptoticExpansion> {
    if samples.n != n {
        return Err(Error::domain(format!(
            "samples have dimension {}, fit requested for {n}",
            samples.n
        )));
    }
    let dipole = options.dipole && n >= 3;
    let mut tail: (f64, f64, Option<DVector<f64>>) = (0.0, 0.0, None);
    let mut prev: Option<DVector<f64>> = None;
    let mut quad = None;
    for _ in 0..MAX_REFINEMENTS {
        let current_a = quad.as_ref().map(|q: &QuadraticPart| q.a.clone());
        let t = tail.clone();
        let tail_fn = |x: &DVector<f64>| -> f64 {
            let Some(a) = &current_a else { return 0.0 };
            let rho = a.quadratic_form(x).sqrt();
            let mut v = t.1 * residue_basis(n, rho);
            if let Some(p) = &t.2 {
                v += p.dot(x) * rho.powi(-(n as i32));
            }
            v
        };
        let q = fit_quadratic(samples, &tail_fn)?;
        tail = fit_tail(samples, &q, dipole)?;
        let mut params: Vec<f64> = q.a.matrix().iter().copied().collect();
        params.push(q.scale);
        params.extend(q.b.iter().copied());
        params.push(tail.0);
        params.push(tail.1);
        if let Some(p) = &tail.2 {
            params.extend(p.iter().copied());
        }
        let params = DVector::from_vec(params);
        quad = Some(q);
        let converged = prev
            .as_ref()
            .map(|p| (p - &params).amax() <= REFINEMENT_TOL * (1.0 + params.amax()))
            .unwrap_or(false);
        prev = Some(params);
        if converged {
            break;
        }
    }
    let q = quad.expect("at least one refinement");
    let (c, d, p) = tail;
    let mut exp = AsymptoticExpansion {
        n,
        a: q.a,
        scale: q.scale,
        b: q.b,
        c,
        d: if options.residue_term { d } else { 0.0 },
        dipole: p,
        error_order: None,
        shells: Vec::new(),
    };
    let residuals = residuals_by_shell(samples, &exp)?;
    exp.shells = samples
        .shells
        .iter()
        .zip(&residuals)
        .map(|(s, r)| ShellSummary {
            radius: s.radius,
            points: r.len(),
            rms_residual: rms(r),
            max_residual: r.iter().fold(0.0, |m, v| m.max(v.abs())),
        })
        .collect();
    exp.error_order = tail_order(samples, &residuals, &fitted_roots(n, options.residue_term, dipole));
    Ok(exp)
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn residuals_by_shell(samples: &SampleSet, exp: &AsymptoticExpansion) -> Result<Vec<Vec<f64>>> {
    samples
        .shells
        .iter()
        .map(|s| {
            s.points
                .iter()
                .zip(&s.values)
                .map(|(x, u)| Ok(u - exp.value(x.as_slice())?))
                .collect()
        })
        .collect()
}

/// One row of the shell residual table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub shell: usize,
    pub radius: f64,
    pub point: Vec<f64>,
    pub value: f64,
    pub residual: f64,
}

/// Sample-by-sample residuals u − expansion.
pub fn shell_residuals(samples: &SampleSet, exp: &AsymptoticExpansion) -> Result<Vec<ResidualRow>> {
    let res = residuals_by_shell(samples, exp)?;
    Ok(samples
        .shells
        .iter()
        .zip(res)
        .enumerate()
        .flat_map(|(k, (s, r))| {
            s.points
                .iter()
                .zip(&s.values)
                .zip(r)
                .map(move |((p, v), e)| ResidualRow {
                    shell: k,
                    radius: s.radius,
                    point: p.iter().copied().collect(),
                    value: *v,
                    residual: e,
                })
        })
        .collect())
}

/// Radial exponents of the fitted terms, as roots of the shift operator
/// (a repeated exponent 0 stands for the log term).
fn fitted_roots(n: usize, residue_term: bool, dipole: bool) -> Vec<f64> {
    let mut e = vec![0.0];
    if residue_term {
        e.push(if n == 2 { 0.0 } else { 2.0 - n as f64 });
    }
    if dipole {
        e.push(1.0 - n as f64);
    }
    e
}

/// Shells form a geometric ladder with the same directions on every shell; returns the ratio.
fn shared_ladder(samples: &SampleSet) -> Option<f64> {
    let s = &samples.shells;
    let q = s[1].radius / s[0].radius;
    let m = s[0].points.len();
    for k in 0..s.len() {
        if k > 0 && ((s[k].radius / s[k - 1].radius) / q - 1.0).abs() > 1e-9 {
            return None;
        }
        if s[k].points.len() != m {
            return None;
        }
        let scale = s[k].radius / s[0].radius;
        for (p, p0) in s[k].points.iter().zip(&s[0].points) {
            if (p - p0 * scale).amax() > 1e-9 * s[k].radius {
                return None;
            }
        }
    }
    Some(q)
}

/// Tail exponent of the residuals.
///
/// Fitted coefficients absorb part of the unresolved tail, so raw residual
/// magnitudes mix several powers. On a geometric ladder with shared
/// directions the shift polynomial Π(S − q^{eᵢ}) over the fitted exponents
/// is applied along every ray, which annihilates the fitted terms and leaves
/// a pure power of the tail. When the ladder leaves at least three windows
/// the linear and quadratic exponents are annihilated too, since those
/// coefficients come from the two largest shells only. Otherwise the slope
/// of the shell RMS residuals is used.
fn tail_order(samples: &SampleSet, residuals: &[Vec<f64>], exponents: &[f64]) -> Option<f64> {
    let magnitude: Vec<f64> = samples
        .shells
        .iter()
        .map(|s| s.values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect();
    let eps = NOISE_ULPS * f64::EPSILON;
    let mut roots = exponents.to_vec();
    roots.extend([1.0, 2.0]);
    if residuals.len() < roots.len() + MIN_ORDER_WINDOWS {
        roots.truncate(exponents.len());
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = match shared_ladder(samples) {
        Some(q) if residuals.len() >= roots.len() + 2 => {
            let mut coef = vec![1.0];
            for e in &roots {
                let z = q.powf(*e);
                let mut next = vec![0.0; coef.len() + 1];
                for (i, c) in coef.iter().enumerate() {
                    next[i + 1] += c;
                    next[i] -= z * c;
                }
                coef = next;
            }
            let span = coef.len();
            let weight: f64 = coef.iter().map(|c| c.abs()).sum();
            (0..=residuals.len() - span)
                .filter_map(|k| {
                    let rays = residuals[k].len();
                    let applied: Vec<f64> = (0..rays)
                        .map(|i| coef.iter().enumerate().map(|(j, c)| c * residuals[k + j][i]).sum())
                        .collect();
                    let floor = eps * weight * magnitude[k..k + span].iter().fold(0.0f64, |m, v| m.max(*v));
                    let v = rms(&applied);
                    (v > floor).then(|| (samples.shells[k].radius, v))
                })
                .unzip()
        }
        _ => residuals
            .iter()
            .enumerate()
            .filter_map(|(k, r)| {
                let v = rms(r);
                (v > eps * magnitude[k]).then(|| (samples.shells[k].radius, v))
            })
            .unzip(),
    };
    if xs.len() < 2 {
        return None;
    }
    power_law_fit(&xs, &ys).map(|f| f.slope)
}

/// Outcome of comparing a fitted expansion with a flux residue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verdict {
    pub pass: bool,
    pub d: f64,
    pub residue: f64,
    pub deviation: f64,
    /// max(3·quadrature error, 1% of |residue|, 1e-6).
    pub residue_tolerance: f64,
    /// Tolerance minus deviation; negative when the residue check fails.
    pub residue_margin: f64,
    pub residue_pass: bool,
    pub error_order: Option<f64>,
    pub order_bound: f64,
    /// Bound minus fitted order; absent when the tail sits below rounding.
    pub order_margin: Option<f64>,
    pub order_pass: bool,
}

/// d = Res[u] within tolerance and tail order ≤ 1 − n + 0.2.
pub fn check_theorem(exp: &AsymptoticExpansion, res: &ResidueResult) -> Result<Verdict> {
    if exp.n != res.n {
        return Err(Error::domain(format!(
            "expansion has dimension {}, residue has dimension {}",
            exp.n, res.n
        )));
    }
    let deviation = (exp.d - res.value).abs();
    let tol = (3.0 * res.error_estimate).max(0.01 * res.value.abs()).max(1e-6);
    let bound = exp.order_bound();
    let order_margin = exp.error_order.map(|o| bound - o);
    let residue_pass = deviation <= tol;
    let order_pass = order_margin.is_none_or(|m| m >= 0.0);
    Ok(Verdict {
        pass: residue_pass && order_pass,
        d: exp.d,
        residue: res.value,
        deviation,
        residue_tolerance: tol,
        residue_margin: tol - deviation,
        residue_pass,
        error_order: exp.error_order,
        order_bound: bound,
        order_margin,
        order_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;
    use crate::linalg::QuadraticProfile;

    const LADDER: [f64; 5] = [10.0, 20.0, 40.0, 80.0, 160.0];

    fn samples_of(f: &dyn ScalarField, radii: &[f64]) -> SampleSet {
        SampleSet::from_field(f, radii, 64, 1.0, SampleSource::Analytic).unwrap()
    }

    #[test]
    fn quadratic_samples_recover_quadratic() {
        let q = QuadraticProfile::standard(3);
        let e = fit_expansion(&samples_of(&q, &LADDER), 3).unwrap();
        assert!((e.a.matrix() - DMatrix::identity(3, 3)).amax() < 1e-10);
        assert!(e.b.amax() < 1e-9 && e.c.abs() < 1e-7 && e.d.abs() < 1e-8);
        assert!((e.scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn directions_are_unit_and_distinct() {
        for n in 2..=5 {
            let d = shell_directions(n, 50);
            assert_eq!(d.len(), 50);
            assert!(d.iter().all(|w| (w.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn validation_rejects_bad_layouts() {
        let q = QuadraticProfile::standard(3);
        assert!(SampleSet::from_field(&q, &LADDER[..4], 64, 1.0, SampleSource::Analytic).is_err());
        assert!(SampleSet::from_field(&q, &LADDER, 39, 1.0, SampleSource::Analytic).is_err());
        assert!(SampleSet::from_field(&q, &LADDER, 64, 6.0, SampleSource::Analytic).is_err());
    }

    #[test]
    fn negative_definite_quadratic_is_domain_error() {
        let f = FnField::new(3, |x: &[f64]| Ok(-0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])));
        assert!(matches!(
            fit_expansion(&samples_of(&f, &LADDER), 3),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn collapsed_ladder_is_ill_conditioned() {
        let q = QuadraticProfile::standard(3);
        let radii = [100.0, 100.0 + 1e-11, 100.0 + 2e-11, 100.0 + 3e-11, 100.0 + 4e-11];
        assert!(matches!(
            fit_expansion(&samples_of(&q, &radii), 3),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn expansion_derivatives_match_finite_differences() {
        let a = SpdUnimodular::new(DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.5],
        ))
        .unwrap();
        let e = AsymptoticExpansion::new(a, DVector::from_vec(vec![0.1, -0.2, 0.3]), 0.7, 0.4)
            .unwrap()
            .with_dipole(DVector::from_vec(vec![0.3, 0.1, -0.2]))
            .unwrap();
        let x = [1.5, -2.0, 0.7];
        let f = |y: &[f64]| e.value(y);
        let g = crate::field::fd_gradient(&f, &x).unwrap();
        let h = crate::field::fd_hessian(&f, &x).unwrap();
        assert!((e.gradient(&x).unwrap() - g).amax() < 1e-7);
        assert!((e.hessian(&x).unwrap() - h).amax() < 1e-5);
        let e2 = AsymptoticExpansion::new(SpdUnimodular::identity(2), DVector::zeros(2), 0.0, 0.5).unwrap();
        let f2 = |y: &[f64]| e2.value(y);
        let x2 = [1.2, 0.4];
        assert!((e2.hessian(&x2).unwrap() - crate::field::fd_hessian(&f2, &x2).unwrap()).amax() < 1e-6);
    }

    #[test]
    fn expansion_json_round_trip() {
        let e = AsymptoticExpansion::quadratic(3)
            .with_dipole(DVector::from_vec(vec![1.0, 0.0, 0.0]))
            .unwrap();
        let s = e.to_json().unwrap();
        assert!(s.contains("\"A\"") && s.contains("\"model\": \"power\""));
        let back: AsymptoticExpansion = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
        assert!(
            serde_json::from_str::<AsymptoticExpansion>(&s.replace("\"model\"", "\"extra\": 1, \"model\"")).is_err()
        );
    }

    #[test]
    fn corrupted_d_fails_with_margins() {
        let mut e = AsymptoticExpansion::quadratic(3);
        e.d = 0.4;
        let res = ResidueResult {
            value: 1.0 / 3.0,
            surface: crate::flux::SurfaceSpec::sphere(vec![0.0; 3], 4.0),
            nodes: 1,
            error_estimate: 1e-12,
            xi_choice: Default::default(),
            n: 3,
            accuracy_warning: false,
        };
        let v = check_theorem(&e, &res).unwrap();
        assert!(!v.pass && v.residue_margin < 0.0);
        e.d = 1.0 / 3.0;
        assert!(check_theorem(&e, &res).unwrap().pass);
        let mut res2 = res.clone();
        res2.n = 2;
        assert!(check_theorem(&e, &res2).is_err());
    }
}
