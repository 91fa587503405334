//! Exterior solutions of the Monge–Ampère equation det(D²u) = 1.
//!
//! Analytic radial solutions, the residue (normalized flux of the
//! divergence-form field ψ(u) − ξ), asymptotic expansion fitting, Kelvin
//! transform checks and a finite-difference Newton solver on annuli.

pub mod error;
pub mod fdsolver;
pub mod field;
pub mod fit;
pub mod flux;
pub mod kelvin;
pub mod linalg;
pub mod numerics;
pub mod radial;

pub use error::{Error, Result};
pub use fdsolver::{
    outer_bc_from_expansion, solve, solve_with, AnnulusGrid, BoundaryData, GridSolution, NewtonReport, Ring,
    SolveOptions,
};
pub use field::ScalarField;
pub use fit::{check_theorem, fit_expansion, fit_expansion_with, AsymptoticExpansion, FitOptions, SampleSet, Verdict};
pub use flux::{residue, residue_from_source, FluxField, ReferenceField, ResidueResult, SurfaceSpec};
pub use linalg::{normalize_quadratic, AffineMap, SpdUnimodular};
pub use radial::{radial_derivatives, radial_expansion, radial_value, RadialExteriorSolution};
