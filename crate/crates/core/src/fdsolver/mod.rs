//! Finite-difference Newton solver for det(D²u) = 1 on annuli.
//!
//! The unknown is w = u − ½x'Bx for an SPD background B (the identity
//! unless given). Dirichlet data are prescribed on both boundary rings; the
//! initial iterate solves the linearization of the equation at B, which for
//! B = I is Δu = n. Newton steps are damped by Armijo backtracking on ‖F‖²
//! and rejected whenever the discrete Hessian loses positive definiteness.

mod grid;
mod interp;
mod io;
pub mod sparse;
mod stencil;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use grid::{AnnulusGrid, Coordinates, MIN_RESOLUTION};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::fit::AsymptoticExpansion;
use sparse::{gmres, BandedLu, Csr, Ilu0};
use stencil::{Mode, Operator};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1.0 / 1024.0;
const STAGNATION: f64 = 1e-14;
/// Banded factorizations are used while their storage stays below this many entries.
const BANDED_STORAGE_LIMIT: usize = 4_000_000;
const GMRES_RESTART: usize = 60;
const GMRES_MAX_ITERATIONS: usize = 5000;

/// Dirichlet values on one boundary ring, in grid angular order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ring {
    Inner,
    Outer,
}

impl BoundaryData {
    /// Samples `field` at the nodes of the given ring.
    pub fn sample(grid: &AnnulusGrid, ring: Ring, field: &dyn ScalarField) -> Result<Self> {
        if field.dim() != grid.n {
            return Err(Error::domain(format!(
                "boundary field has dimension {}, grid has {}",
                field.dim(),
                grid.n
            )));
        }
        let i = ring_index(grid, ring);
        let values = (0..grid.ring_size())
            .map(|a| field.value(&grid.position(i * grid.ring_size() + a)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { values })
    }
}

fn ring_index(grid: &AnnulusGrid, ring: Ring) -> usize {
    match ring {
        Ring::Inner => 0,
        Ring::Outer => grid.resolution,
    }
}

/// Evaluates a fitted expansion on the outer boundary ring.
pub fn outer_bc_from_expansion(expansion: &AsymptoticExpansion, grid: &AnnulusGrid) -> Result<BoundaryData> {
    BoundaryData::sample(grid, Ring::Outer, expansion)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    /// Banded LU when it fits in memory, otherwise ILU(0)-preconditioned GMRES.
    #[default]
    Auto,
    BandedLu,
    Gmres,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Background quadratic B; the identity when `None`.
    pub background: Option<DMatrix<f64>>,
    pub linear_solver: LinearSolver,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: 50,
            background: None,
            linear_solver: LinearSolver::Auto,
        }
    }
}

/// Convergence record of a Newton solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Max-norm residual before each step and after the last one.
    pub residual_history: Vec<f64>,
    pub final_residual: f64,
    /// Accepted damping factor of each step.
    pub step_lengths: Vec<f64>,
    pub linear_solver: String,
    /// Krylov iterations per linear solve (zero for direct solves).
    pub linear_iterations: Vec<usize>,
    pub tolerance: f64,
}

/// Converged discrete solution with interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    grid: AnnulusGrid,
    background: DMatrix<f64>,
    /// u at every node, boundary rings included.
    values: Vec<f64>,
    /// w = u − ½x'Bx at every node.
    deviation: Vec<f64>,
    report: NewtonReport,
}

fn background_quadratic(b: &DMatrix<f64>, x: &[f64]) -> f64 {
    let v = DVector::from_column_slice(x);
    0.5 * v.dot(&(b * &v))
}

impl GridSolution {
    pub(crate) fn from_values(
        grid: AnnulusGrid,
        background: DMatrix<f64>,
        values: Vec<f64>,
        report: NewtonReport,
    ) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::Format(format!(
                "expected {} node values, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        let deviation = values
            .iter()
            .enumerate()
            .map(|(node, u)| u - background_quadratic(&background, &grid.position(node)))
            .collect();
        Ok(Self {
            grid,
            background,
            values,
            deviation,
            report,
        })
    }

    /// Nodal samples of `field` with an empty Newton report, for
    /// interpolating known functions.
    pub fn sampled(grid: &AnnulusGrid, field: &dyn ScalarField, background: Option<DMatrix<f64>>) -> Result<Self> {
        grid.validate()?;
        if field.dim() != grid.n {
            return Err(Error::domain(format!(
                "field has dimension {}, grid has {}",
                field.dim(),
                grid.n
            )));
        }
        let values = (0..grid.node_count())
            .map(|node| field.value(&grid.position(node)))
            .collect::<Result<Vec<_>>>()?;
        let report = NewtonReport {
            iterations: 0,
            residual_history: Vec::new(),
            final_residual: 0.0,
            step_lengths: Vec::new(),
            linear_solver: "none".into(),
            linear_iterations: Vec::new(),
            tolerance: 0.0,
        };
        let b = background.unwrap_or_else(|| DMatrix::identity(grid.n, grid.n));
        Self::from_values(grid.clone(), b, values, report)
    }

    pub fn grid(&self) -> &AnnulusGrid {
        &self.grid
    }

    pub fn background(&self) -> &DMatrix<f64> {
        &self.background
    }

    /// u at every node in grid order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn report(&self) -> &NewtonReport {
        &self.report
    }

    pub fn boundary(&self, ring: Ring) -> BoundaryData {
        let m = self.grid.ring_size();
        let i = ring_index(&self.grid, ring);
        BoundaryData {
            values: self.values[i * m..(i + 1) * m].to_vec(),
        }
    }

    /// Value, gradient and Hessian of the cubic interpolant at x, which must
    /// lie at least one radial cell inside the annulus.
    pub fn interpolate(&self, x: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let (w, gw, hw) = interp::interpolate_deviation(&self.grid, &self.deviation, x)?;
        let v = DVector::from_column_slice(x);
        Ok((
            w + background_quadratic(&self.background, x),
            gw + &self.background * v,
            hw + &self.background,
        ))
    }

    /// Max-norm of det(D²u) − 1 over the interior nodes.
    pub fn discrete_residual(&self) -> f64 {
        let op = Operator::new(&self.grid, &self.background);
        max_abs(&op.residual(&self.deviation, Mode::MongeAmpere))
    }

    pub fn save(&self, json_path: &std::path::Path) -> Result<()> {
        io::save(self, json_path)
    }

    pub fn load(json_path: &std::path::Path) -> Result<Self> {
        io::load(json_path)
    }
}

impl ScalarField for GridSolution {
    fn dim(&self) -> usize {
        self.grid.n
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.interpolate(x)?.0)
    }

    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(self.interpolate(x)?.1)
    }

    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.interpolate(x)?.2)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Solves with default options and the given residual tolerance.
pub fn solve(grid: &AnnulusGrid, inner: &BoundaryData, outer: &BoundaryData, tolerance: f64) -> Result<GridSolution> {
    solve_with(
        grid,
        inner,
        outer,
        &SolveOptions {
            tolerance,
            ..SolveOptions::default()
        },
    )
}

struct LinearSystem {
    kind: LinearSolver,
}

impl LinearSystem {
    fn choose(requested: LinearSolver, jac: &Csr) -> Self {
        let kind = match requested {
            LinearSolver::Auto => {
                if jac.n * (3 * jac.bandwidth() + 1) <= BANDED_STORAGE_LIMIT {
                    LinearSolver::BandedLu
                } else {
                    LinearSolver::Gmres
                }
            }
            k => k,
        };
        Self { kind }
    }

    fn name(&self) -> &'static str {
        match self.kind {
            LinearSolver::BandedLu => "banded_lu",
            _ => "gmres_ilu0",
        }
    }

    /// Solves J x = rhs to relative accuracy `rel_tol` (direct solves are exact).
    fn solve(&self, jac: &Csr, rhs: &[f64], rel_tol: f64) -> Result<(Vec<f64>, usize)> {
        match self.kind {
            LinearSolver::BandedLu => Ok((BandedLu::factor(jac)?.solve(rhs), 0)),
            _ => {
                let ilu = Ilu0::new(jac)?;
                let (x, stats) = gmres(jac, rhs, &ilu, rel_tol, GMRES_RESTART, GMRES_MAX_ITERATIONS)?;
                Ok((x, stats.iterations))
            }
        }
    }
}

fn check_inputs(
    grid: &AnnulusGrid,
    inner: &BoundaryData,
    outer: &BoundaryData,
    options: &SolveOptions,
) -> Result<DMatrix<f64>> {
    grid.validate()?;
    for (label, bc) in [("inner", inner), ("outer", outer)] {
        if bc.values.len() != grid.ring_size() {
            return Err(Error::domain(format!(
                "{label} boundary data has {} values, the ring has {} nodes",
                bc.values.len(),
                grid.ring_size()
            )));
        }
        if bc.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("{label} boundary data is not finite")));
        }
    }
    if !(options.tolerance > 0.0) {
        return Err(Error::domain("solver tolerance must be positive"));
    }
    let b = options
        .background
        .clone()
        .unwrap_or_else(|| DMatrix::identity(grid.n, grid.n));
    if b.shape() != (grid.n, grid.n) || (&b - b.transpose()).amax() > 1e-12 * b.amax() || b.clone().cholesky().is_none()
    {
        return Err(Error::domain(
            "background quadratic must be a symmetric positive definite n×n matrix",
        ));
    }
    Ok(b)
}

/// Newton solve of the discrete equation with Dirichlet data on both rings.
pub fn solve_with(
    grid: &AnnulusGrid,
    inner: &BoundaryData,
    outer: &BoundaryData,
    options: &SolveOptions,
) -> Result<GridSolution> {
    let b = check_inputs(grid, inner, outer, options)?;
    let op = Operator::new(grid, &b);
    let ring = grid.ring_size();
    let nu = op.unknowns();

    let mut w = vec![0.0; grid.node_count()];
    for (offset, bc) in [(0, inner), (grid.resolution * ring, outer)] {
        for (a, u) in bc.values.iter().enumerate() {
            w[offset + a] = u - background_quadratic(&b, &grid.position(offset + a));
        }
    }

    let (g0, j0) = op.linearize(&w, Mode::Linearized);
    let system = LinearSystem::choose(options.linear_solver, &j0);
    let rhs: Vec<f64> = g0.iter().map(|v| -v).collect();
    let (delta, its) = system.solve(&j0, &rhs, 1e-13)?;
    for (k, d) in delta.iter().enumerate() {
        w[ring + k] += d;
    }
    if let Some(idx) = op.first_nonconvex(&w) {
        return Err(Error::Convexity {
            node: idx + ring,
            iteration: 0,
        });
    }

    let mut history = Vec::new();
    let mut steps = Vec::new();
    let mut linear_iterations = vec![its];
    let mut iteration = 0;
    loop {
        let (f, jac) = op.linearize(&w, Mode::MongeAmpere);
        let res = max_abs(&f);
        history.push(res);
        if res <= options.tolerance {
            break;
        }
        if iteration >= options.max_iterations {
            return Err(Error::Convergence {
                reason: "iteration limit reached".into(),
                residual: res,
                iterations: iteration,
                history,
            });
        }
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let forcing = res.clamp(1e-13, 1e-4);
        let (delta, its) = system.solve(&jac, &rhs, forcing)?;
        linear_iterations.push(its);
        if max_abs(&delta) < STAGNATION {
            return Err(Error::Convergence {
                reason: "Newton step stagnated".into(),
                residual: res,
                iterations: iteration,
                history,
            });
        }
        let merit = sum_sq(&f);
        let mut t = 1.0;
        let mut last_nonconvex = None;
        let accepted = loop {
            let mut trial = w.clone();
            for k in 0..nu {
                trial[ring + k] += t * delta[k];
            }
            match op.first_nonconvex(&trial) {
                Some(idx) => last_nonconvex = Some(idx),
                None => {
                    if sum_sq(&op.residual(&trial, Mode::MongeAmpere)) <= (1.0 - 2.0 * ARMIJO * t) * merit {
                        break Some(trial);
                    }
                    last_nonconvex = None;
                }
            }
            t *= 0.5;
            if t < MIN_STEP {
                break None;
            }
        };
        iteration += 1;
        match accepted {
            Some(trial) => {
                w = trial;
                steps.push(t);
            }
            None => {
                if let Some(idx) = last_nonconvex {
                    return Err(Error::Convexity {
                        node: idx + ring,
                        iteration,
                    });
                }
                return Err(Error::Convergence {
                    reason: "line search failed to reduce the residual".into(),
                    residual: res,
                    iterations: iteration,
                    history,
                });
            }
        }
    }

    let values = w
        .iter()
        .enumerate()
        .map(|(node, wv)| wv + background_quadratic(&b, &grid.position(node)))
        .collect();
    let final_residual = *history.last().unwrap();
    let report = NewtonReport {
        iterations: iteration,
        residual_history: history,
        final_residual,
        step_lengths: steps,
        linear_solver: system.name().into(),
        linear_iterations,
        tolerance: options.tolerance,
    };
    GridSolution::from_values(grid.clone(), b, values, report)
}
