//! `residue`: flux residues of one solution over several surfaces.

use std::path::PathBuf;

use exterior_core::field::ScalarField;
use exterior_core::flux::residue_seeded;
use exterior_core::{AffineMap, FluxField, GridSolution, ReferenceField, ResidueResult, SurfaceSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, FieldExt, StageExt};
use crate::source::radial_field;
use crate::{create_out_dir, max_pairwise_deviation, write_json, Outcome, Report, RunOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolutionSource {
    /// The radial solution with parameter `a`, composed with `affine` when given.
    Radial {
        n: usize,
        a: f64,
        r0: f64,
        #[serde(default)]
        u0: Option<f64>,
        #[serde(default)]
        affine: Option<AffineMap>,
    },
    /// A grid solution written by `solve-fit` (path of its JSON header).
    GridFile { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidueConfig {
    pub solution: SolutionSource,
    pub surfaces: Vec<SurfaceSpec>,
    #[serde(default)]
    pub xi: ReferenceField,
    /// Seed of randomized quadrature rules.
    #[serde(default)]
    pub seed: u64,
}

/// A solution ready for flux evaluation, with the shell of radii where it may be sampled.
pub(crate) struct Loaded {
    pub field: Box<dyn ScalarField>,
    pub n: usize,
    /// Surfaces must stay within [lo, hi] of the origin.
    pub admissible: (f64, f64),
    pub describe: String,
}

fn load(source: &SolutionSource) -> Result<(Loaded, SolutionSource), CliError> {
    match source {
        SolutionSource::Radial { n, a, r0, u0, affine } => {
            let u0 = u0.unwrap_or(0.0);
            let field = radial_field(*n, *a, *r0, u0, affine.as_ref(), "solution")?;
            // Smallest |x| whose image under the affine map stays outside the ball of radius r0.
            let lo = match affine {
                None => *r0,
                Some(map) => {
                    let sigma = map.linear().singular_values().min();
                    (r0 + map.shift().norm()) / sigma
                }
            };
            let loaded = Loaded {
                field,
                n: *n,
                admissible: (lo, f64::INFINITY),
                describe: format!("outside the ball of radius {lo}"),
            };
            let resolved = SolutionSource::Radial {
                n: *n,
                a: *a,
                r0: *r0,
                u0: Some(u0),
                affine: affine.clone(),
            };
            Ok((loaded, resolved))
        }
        SolutionSource::GridFile { path } => {
            let sol = GridSolution::load(path).map_err(|e| CliError::config("solution.path", e.to_string()))?;
            let grid = sol.grid().clone();
            let (lo, hi) = (grid.inner_radius + grid.h(), grid.outer_radius - grid.h());
            let loaded = Loaded {
                field: Box::new(sol),
                n: grid.n,
                admissible: (lo, hi),
                describe: format!("in the grid annulus [{lo}, {hi}]"),
            };
            Ok((loaded, source.clone()))
        }
    }
}

/// Checks that a surface is valid in dimension `n` and lies where the solution is defined.
pub(crate) fn check_surface(s: &SurfaceSpec, loaded: &Loaded, field: &str) -> Result<(), CliError> {
    s.validate(loaded.n).field(field)?;
    let origin = vec![0.0; loaded.n];
    let (lo, hi) = loaded.admissible;
    if s.min_distance_from(&origin) < lo * (1.0 - 1e-12) || s.max_distance_from(&origin) > hi * (1.0 + 1e-12) {
        return Err(CliError::config(
            field,
            format!("surface {} must lie {}", s.label(), loaded.describe),
        ));
    }
    Ok(())
}

impl ResidueConfig {
    fn resolve(&self, seed: Option<u64>) -> Result<(Self, Loaded), CliError> {
        let (loaded, solution) = load(&self.solution)?;
        if self.surfaces.is_empty() {
            return Err(CliError::config("surfaces", "at least one surface is required"));
        }
        for (k, s) in self.surfaces.iter().enumerate() {
            check_surface(s, &loaded, &format!("surfaces[{k}]"))?;
        }
        let seed = seed.unwrap_or(self.seed);
        let surfaces = self
            .surfaces
            .iter()
            .map(|s| s.clone().with_quadrature(s.resolved_quadrature(loaded.n, seed)))
            .collect();
        let config = Self {
            solution,
            surfaces,
            xi: self.xi,
            seed,
        };
        Ok((config, loaded))
    }
}

#[derive(Serialize)]
struct ResidueResults {
    residues: Vec<ResidueResult>,
    max_pairwise_deviation: f64,
}

pub(crate) fn residues(
    loaded: &Loaded,
    surfaces: &[SurfaceSpec],
    xi: ReferenceField,
    seed: u64,
) -> Result<Vec<ResidueResult>, CliError> {
    let flux = FluxField::new(loaded.field.as_ref(), xi);
    surfaces
        .iter()
        .map(|s| residue_seeded(&flux, s, loaded.n, seed).stage("residue"))
        .collect()
}

pub fn run(config: ResidueConfig, options: &RunOptions) -> Result<Outcome, CliError> {
    let (config, loaded) = config.resolve(options.seed)?;
    let results = residues(&loaded, &config.surfaces, config.xi, config.seed)?;
    let values: Vec<f64> = results.iter().map(|r| r.value).collect();
    create_out_dir(&options.out)?;
    let path = write_json(
        &options.out,
        "residue.json",
        &Report {
            config: &config,
            results: ResidueResults {
                max_pairwise_deviation: max_pairwise_deviation(&values),
                residues: results,
            },
        },
    )?;
    Ok(Outcome {
        files: vec![path],
        failures: Vec::new(),
    })
}
