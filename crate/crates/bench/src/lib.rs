//! Benchmark fixtures shared by the criterion targets.

use exterior_core::fit::SampleSource;
use exterior_core::{AnnulusGrid, BoundaryData, RadialExteriorSolution, Ring, SampleSet};

/// The radial solution with a = 1 and r0 = 1 in dimension `n`.
pub fn radial(n: usize) -> RadialExteriorSolution {
    RadialExteriorSolution::new(n, 1.0, 1.0, 0.0).expect("valid parameters")
}

/// Analytic samples of the radial solution on shells 10·2^k, k = 0..4.
pub fn radial_shells(n: usize) -> SampleSet {
    let radii = [10.0, 20.0, 40.0, 80.0, 160.0];
    SampleSet::from_field(&radial(n), &radii, 96, 1.0, SampleSource::Analytic).expect("valid shells")
}

/// Annulus [1, 8] with Dirichlet data of the radial solution with r0 = 1/2.
pub fn radial_problem(n: usize, resolution: usize) -> (AnnulusGrid, BoundaryData, BoundaryData) {
    let u = RadialExteriorSolution::new(n, 1.0, 0.5, 0.0).expect("valid parameters");
    let grid = AnnulusGrid::new(n, 1.0, 8.0, resolution).expect("valid grid");
    let inner = BoundaryData::sample(&grid, Ring::Inner, &u).expect("inner ring in domain");
    let outer = BoundaryData::sample(&grid, Ring::Outer, &u).expect("outer ring in domain");
    (grid, inner, outer)
}
