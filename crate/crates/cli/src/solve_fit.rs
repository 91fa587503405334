//! `solve-fit`: grid solve, shell fit and flux residue of the same solution.

use std::fmt::Write as _;

use exterior_core::fdsolver::LinearSolver;
use exterior_core::fit::{shell_residuals, SampleSource};
use exterior_core::flux::residue_seeded;
use exterior_core::linalg::{is_positive_definite, matrix_from_rows, matrix_rows};
use exterior_core::numerics::geometric_ladder;
use exterior_core::{
    check_theorem, fit_expansion_with, outer_bc_from_expansion, radial_expansion, solve_with, AffineMap, AnnulusGrid,
    AsymptoticExpansion, BoundaryData, FitOptions, FluxField, GridSolution, NewtonReport, RadialExteriorSolution,
    ReferenceField, ResidueResult, Ring, SampleSet, SolveOptions, SurfaceSpec, Verdict,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, FieldExt, StageExt};
use crate::residue::{check_surface, Loaded};
use crate::source::{min_image_radius, quadratic_field, radial_field};
use crate::{create_out_dir, write_json, write_text, Outcome, Report, RunOptions};

const DEFAULT_TOLERANCE: f64 = 1e-10;
const DEFAULT_MAX_ITERATIONS: usize = 50;
const DEFAULT_SHELLS: usize = 7;
const DEFAULT_POINTS: usize = 200;

/// Exact solution supplying the boundary data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Boundary {
    /// Radial solution, composed with `affine` when given. `r0` defaults to a
    /// quarter of the smallest image radius of the inner ring.
    Radial {
        a: f64,
        #[serde(default)]
        r0: Option<f64>,
        #[serde(default)]
        u0: Option<f64>,
        #[serde(default)]
        affine: Option<AffineMap>,
    },
    /// ½|x|², composed with `affine` when given.
    Quadratic {
        #[serde(default)]
        affine: Option<AffineMap>,
    },
}

impl Boundary {
    fn affine(&self) -> Option<&AffineMap> {
        match self {
            Boundary::Radial { affine, .. } | Boundary::Quadratic { affine } => affine.as_ref(),
        }
    }
}

/// Dirichlet data on the outer ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterCondition {
    /// Values of the boundary solution.
    #[default]
    Exact,
    /// Values of the analytic expansion at infinity (radial data only).
    Expansion,
}

/// Geometric ladder of sampling shells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellLadder {
    /// max(2·inner radius, outer radius / 4) when omitted.
    #[serde(default)]
    pub first: Option<f64>,
    /// Chosen so the last shell sits two grid steps inside the outer ring when omitted.
    #[serde(default)]
    pub ratio: Option<f64>,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveFitConfig {
    pub grid: AnnulusGrid,
    pub boundary: Boundary,
    #[serde(default)]
    pub outer: Option<OuterCondition>,
    /// Background quadratic of the solver; T'T for affine data, I otherwise.
    #[serde(default)]
    pub background: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub linear_solver: Option<LinearSolver>,
    #[serde(default)]
    pub shells: Option<ShellLadder>,
    #[serde(default)]
    pub fit: Option<FitOptions>,
    /// Residue surface; the sphere through the first shell when omitted.
    #[serde(default)]
    pub surface: Option<SurfaceSpec>,
    #[serde(default)]
    pub xi: Option<ReferenceField>,
    /// Seed of randomized quadrature rules.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SolveFitConfig {
    /// Fills every default; idempotent.
    pub fn resolve(&self, seed: Option<u64>) -> Result<Self, CliError> {
        let grid = &self.grid;
        grid.validate().field("grid")?;
        let n = grid.n;
        let rho = min_image_radius(self.boundary.affine(), grid.inner_radius);
        let boundary = match &self.boundary {
            Boundary::Radial { a, r0, u0, affine } => {
                let r0 = r0.unwrap_or(0.25 * rho);
                if !(r0 > 0.0 && r0 < rho) {
                    return Err(CliError::config(
                        "boundary.r0",
                        format!("the inner ring must map outside the ball of radius r0; need 0 < r0 < {rho}"),
                    ));
                }
                let resolved = Boundary::Radial {
                    a: *a,
                    r0: Some(r0),
                    u0: Some(u0.unwrap_or(0.0)),
                    affine: affine.clone(),
                };
                build_field(&resolved, n)?;
                resolved
            }
            b @ Boundary::Quadratic { .. } => {
                build_field(b, n)?;
                b.clone()
            }
        };
        let outer = self.outer.unwrap_or_default();
        if outer == OuterCondition::Expansion && !matches!(boundary, Boundary::Radial { affine: None, .. }) {
            return Err(CliError::config(
                "outer",
                "expansion data needs a radial boundary without affine map",
            ));
        }

        let background = match &self.background {
            Some(rows) => {
                let b = matrix_from_rows(rows).field("background")?;
                let symmetric = b.is_square() && (&b - b.transpose()).amax() <= 1e-12 * b.amax();
                if b.nrows() != n || !symmetric || !is_positive_definite(&b) {
                    return Err(CliError::config(
                        "background",
                        format!("must be a symmetric positive definite {n}×{n} matrix"),
                    ));
                }
                rows.clone()
            }
            None => {
                let b = match boundary.affine() {
                    Some(map) => map.linear().transpose() * map.linear(),
                    None => DMatrix::identity(n, n),
                };
                matrix_rows(&b)
            }
        };

        let tolerance = self.tolerance.unwrap_or(DEFAULT_TOLERANCE);
        if !(tolerance > 0.0) {
            return Err(CliError::config("tolerance", "must be positive"));
        }
        let max_iterations = self.max_iterations.unwrap_or(DEFAULT_MAX_ITERATIONS);
        if max_iterations == 0 {
            return Err(CliError::config("max_iterations", "must be positive"));
        }

        let shells = self.shells.clone().unwrap_or(ShellLadder {
            first: None,
            ratio: None,
            count: None,
            points: None,
        });
        let h = grid.h();
        let count = shells.count.unwrap_or(DEFAULT_SHELLS);
        if count < 5 {
            return Err(CliError::config("shells.count", "the fit needs at least 5 shells"));
        }
        let first = shells
            .first
            .unwrap_or((2.0 * grid.inner_radius).max(grid.outer_radius / 4.0));
        if !(first >= 2.0 * grid.inner_radius) {
            return Err(CliError::config(
                "shells.first",
                "shells must lie at least twice the inner radius from the origin",
            ));
        }
        let last = grid.outer_radius - 2.0 * h;
        let ratio = shells
            .ratio
            .unwrap_or_else(|| (last / first).powf(1.0 / (count - 1) as f64));
        if !(ratio > 1.0) {
            return Err(CliError::config(
                "shells.ratio",
                "must exceed 1 (is the annulus wide enough?)",
            ));
        }
        if first * ratio.powi(count as i32 - 1) > (grid.outer_radius - h) * (1.0 + 1e-12) {
            return Err(CliError::config(
                "shells",
                "the last shell leaves the interpolation range of the grid",
            ));
        }
        let points = shells.points.unwrap_or(DEFAULT_POINTS);
        if points < 40 {
            return Err(CliError::config(
                "shells.points",
                "the fit needs at least 40 points per shell",
            ));
        }

        let seed = seed.or(self.seed).unwrap_or(0);
        let surface = self
            .surface
            .clone()
            .unwrap_or_else(|| SurfaceSpec::sphere(vec![0.0; n], first));
        let range = Loaded {
            field: build_field(&boundary, n)?,
            n,
            admissible: (grid.inner_radius + h, grid.outer_radius - h),
            describe: format!(
                "in the grid annulus [{}, {}]",
                grid.inner_radius + h,
                grid.outer_radius - h
            ),
        };
        check_surface(&surface, &range, "surface")?;
        let surface = surface.clone().with_quadrature(surface.resolved_quadrature(n, seed));

        Ok(Self {
            grid: grid.clone(),
            boundary,
            outer: Some(outer),
            background: Some(background),
            tolerance: Some(tolerance),
            max_iterations: Some(max_iterations),
            linear_solver: Some(self.linear_solver.unwrap_or_default()),
            shells: Some(ShellLadder {
                first: Some(first),
                ratio: Some(ratio),
                count: Some(count),
                points: Some(points),
            }),
            fit: Some(self.fit.unwrap_or_default()),
            surface: Some(surface),
            xi: Some(self.xi.unwrap_or_default()),
            seed: Some(seed),
        })
    }
}

fn build_field(boundary: &Boundary, n: usize) -> Result<Box<dyn exterior_core::ScalarField>, CliError> {
    match boundary {
        Boundary::Radial { a, r0, u0, affine } => radial_field(
            n,
            *a,
            r0.expect("resolved"),
            u0.unwrap_or(0.0),
            affine.as_ref(),
            "boundary",
        ),
        Boundary::Quadratic { affine } => quadratic_field(n, affine.as_ref(), "boundary"),
    }
}

#[derive(Serialize)]
struct SolveFitResults<'a> {
    expansion: &'a AsymptoticExpansion,
    residue: &'a ResidueResult,
    verdict: &'a Verdict,
    newton_report: &'a NewtonReport,
}

/// Everything `solve-fit` computes, before it is written out.
pub struct SolveFitRun {
    pub config: SolveFitConfig,
    pub solution: GridSolution,
    pub samples: SampleSet,
    pub expansion: AsymptoticExpansion,
    pub residue: ResidueResult,
    pub verdict: Verdict,
}

/// Runs the pipeline on a config without writing files.
pub fn compute(config: &SolveFitConfig, seed: Option<u64>) -> Result<SolveFitRun, CliError> {
    let config = config.resolve(seed)?;
    let grid = &config.grid;
    let n = grid.n;
    let u = build_field(&config.boundary, n)?;

    let inner = BoundaryData::sample(grid, Ring::Inner, u.as_ref()).stage("boundary")?;
    let outer = match config.outer.expect("resolved") {
        OuterCondition::Exact => BoundaryData::sample(grid, Ring::Outer, u.as_ref()).stage("boundary")?,
        OuterCondition::Expansion => {
            let Boundary::Radial { a, r0, u0, .. } = &config.boundary else {
                unreachable!("checked during resolution")
            };
            let sol =
                RadialExteriorSolution::new(n, *a, r0.expect("resolved"), u0.expect("resolved")).stage("boundary")?;
            outer_bc_from_expansion(&radial_expansion(&sol), grid).stage("boundary")?
        }
    };
    let options = SolveOptions {
        tolerance: config.tolerance.expect("resolved"),
        max_iterations: config.max_iterations.expect("resolved"),
        background: Some(matrix_from_rows(config.background.as_ref().expect("resolved")).stage("solve")?),
        linear_solver: config.linear_solver.expect("resolved"),
    };
    let solution = solve_with(grid, &inner, &outer, &options).stage("solve")?;

    let ladder = config.shells.as_ref().expect("resolved");
    let radii = geometric_ladder(
        ladder.first.expect("resolved"),
        ladder.ratio.expect("resolved"),
        ladder.count.expect("resolved"),
    );
    let samples = SampleSet::from_field(
        &solution,
        &radii,
        ladder.points.expect("resolved"),
        grid.inner_radius,
        SampleSource::Grid,
    )
    .stage("sample")?;
    let expansion = fit_expansion_with(&samples, n, &config.fit.expect("resolved")).stage("fit")?;
    let residue = residue_seeded(
        &FluxField::new(&solution, config.xi.expect("resolved")),
        config.surface.as_ref().expect("resolved"),
        n,
        config.seed.expect("resolved"),
    )
    .stage("residue")?;
    let verdict = check_theorem(&expansion, &residue).stage("verdict")?;
    Ok(SolveFitRun {
        config,
        solution,
        samples,
        expansion,
        residue,
        verdict,
    })
}

pub fn run(config: SolveFitConfig, options: &RunOptions) -> Result<Outcome, CliError> {
    let r = compute(&config, options.seed)?;
    let n = r.config.grid.n;

    let mut csv = String::from("shell,radius");
    for k in 1..=n {
        let _ = write!(csv, ",x{k}");
    }
    csv.push_str(",value,residual\n");
    for row in shell_residuals(&r.samples, &r.expansion).stage("fit")? {
        let _ = write!(csv, "{},{:e}", row.shell, row.radius);
        for x in &row.point {
            let _ = write!(csv, ",{x:e}");
        }
        let _ = writeln!(csv, ",{:e},{:e}", row.value, row.residual);
    }

    create_out_dir(&options.out)?;
    let solution_path = options.out.join("solution.json");
    r.solution.save(&solution_path).stage("save")?;
    let files = vec![
        write_json(
            &options.out,
            "verdict.json",
            &Report {
                config: &r.config,
                results: SolveFitResults {
                    expansion: &r.expansion,
                    residue: &r.residue,
                    verdict: &r.verdict,
                    newton_report: r.solution.report(),
                },
            },
        )?,
        write_text(&options.out, "shell_residuals.csv", &csv)?,
        solution_path.clone(),
        solution_path.with_extension("csv"),
    ];
    let failures = if r.verdict.pass {
        Vec::new()
    } else {
        let mut why = Vec::new();
        if !r.verdict.residue_pass {
            why.push(format!(
                "d = {} differs from the residue {} by {:e}",
                r.verdict.d, r.verdict.residue, r.verdict.deviation
            ));
        }
        if !r.verdict.order_pass {
            why.push(format!(
                "tail order {:?} exceeds {}",
                r.verdict.error_order, r.verdict.order_bound
            ));
        }
        why
    };
    Ok(Outcome { files, failures })
}
