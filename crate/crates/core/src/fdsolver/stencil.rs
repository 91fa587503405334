//! Central-difference frame Hessians and the discrete Monge–Ampère operator.
//!
//! The unknown is the deviation w = u − ½x'Bx from a background quadratic.
//! At every interior node the Hessian of w is assembled in the orthonormal
//! polar or spherical frame (9-point stencil for n = 2, 19-point for n = 3)
//! and the frame components of B are added exactly.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::grid::AnnulusGrid;
use super::sparse::Csr;

/// Symmetric frame entries in the order (rr, θθ, φφ, rθ, rφ, θφ); polar
/// grids use (rr, θθ, rθ).
pub(crate) const ENTRIES_2: [(usize, usize); 3] = [(0, 0), (1, 1), (0, 1)];
pub(crate) const ENTRIES_3: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

const POINTS_2: [(isize, isize, isize); 9] = [
    (0, 0, 0),
    (1, 0, 0),
    (-1, 0, 0),
    (0, 1, 0),
    (0, -1, 0),
    (1, 1, 0),
    (1, -1, 0),
    (-1, 1, 0),
    (-1, -1, 0),
];

const POINTS_3: [(isize, isize, isize); 19] = [
    (0, 0, 0),
    (1, 0, 0),
    (-1, 0, 0),
    (0, 1, 0),
    (0, -1, 0),
    (0, 0, 1),
    (0, 0, -1),
    (1, 1, 0),
    (1, -1, 0),
    (-1, 1, 0),
    (-1, -1, 0),
    (1, 0, 1),
    (1, 0, -1),
    (-1, 0, 1),
    (-1, 0, -1),
    (0, 1, 1),
    (0, 1, -1),
    (0, -1, 1),
    (0, -1, -1),
];

const MAX_POINTS: usize = 19;
const MAX_DERIVS: usize = 9;
const MAX_ENTRIES: usize = 6;

/// Linear map from coordinate derivatives to frame Hessian entries at
/// radius r and angle θ.
///
/// Derivative order, polar: (w_r, w_θ, w_rr, w_θθ, w_rθ); spherical:
/// (w_r, w_θ, w_φ, w_rr, w_θθ, w_φφ, w_rθ, w_rφ, w_θφ).
pub(crate) fn frame_map(n: usize, r: f64, theta: f64) -> [[f64; MAX_DERIVS]; MAX_ENTRIES] {
    let mut l = [[0.0; MAX_DERIVS]; MAX_ENTRIES];
    let r2 = r * r;
    if n == 2 {
        l[0][2] = 1.0;
        l[1][3] = 1.0 / r2;
        l[1][0] = 1.0 / r;
        l[2][4] = 1.0 / r;
        l[2][1] = -1.0 / r2;
    } else {
        let (s, c) = theta.sin_cos();
        l[0][3] = 1.0;
        l[1][4] = 1.0 / r2;
        l[1][0] = 1.0 / r;
        l[2][5] = 1.0 / (r2 * s * s);
        l[2][0] = 1.0 / r;
        l[2][1] = c / (s * r2);
        l[3][6] = 1.0 / r;
        l[3][1] = -1.0 / r2;
        l[4][7] = 1.0 / (r * s);
        l[4][2] = -1.0 / (r2 * s);
        l[5][8] = 1.0 / (r2 * s);
        l[5][2] = -c / (r2 * s * s);
    }
    l
}

pub(crate) fn entries(n: usize) -> &'static [(usize, usize)] {
    if n == 2 {
        &ENTRIES_2
    } else {
        &ENTRIES_3
    }
}

/// Symmetric matrix from frame entries.
pub(crate) fn entries_to_matrix(n: usize, e: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for (v, &(a, b)) in e.iter().zip(entries(n)) {
        m[(a, b)] = *v;
        m[(b, a)] = *v;
    }
    m
}

/// det M and its derivatives with respect to the symmetric entries
/// (off-diagonal entries count both positions).
pub(crate) fn det_and_gradient(n: usize, m: &[f64; MAX_ENTRIES]) -> (f64, [f64; MAX_ENTRIES]) {
    let mut g = [0.0; MAX_ENTRIES];
    if n == 2 {
        let (a, b, d) = (m[0], m[1], m[2]);
        g[0] = b;
        g[1] = a;
        g[2] = -2.0 * d;
        (a * b - d * d, g)
    } else {
        let (a, b, c, d, e, f) = (m[0], m[1], m[2], m[3], m[4], m[5]);
        g[0] = b * c - f * f;
        g[1] = a * c - e * e;
        g[2] = a * b - d * d;
        g[3] = 2.0 * (e * f - c * d);
        g[4] = 2.0 * (d * f - b * e);
        g[5] = 2.0 * (d * e - a * f);
        (a * g[0] + 2.0 * d * e * f - b * e * e - c * d * d, g)
    }
}

/// Sylvester's criterion on the symmetric entries.
pub(crate) fn positive_definite(n: usize, m: &[f64; MAX_ENTRIES]) -> bool {
    if n == 2 {
        m[0] > 0.0 && m[0] * m[1] - m[2] * m[2] > 0.0
    } else {
        m[0] > 0.0 && m[0] * m[1] - m[3] * m[3] > 0.0 && det_and_gradient(3, m).0 > 0.0
    }
}

struct NodeData {
    neighbors: [usize; MAX_POINTS],
    map: [[f64; MAX_DERIVS]; MAX_ENTRIES],
    background: [f64; MAX_ENTRIES],
}

/// Discrete operator on the interior nodes of a grid.
pub(crate) struct Operator {
    n: usize,
    ring: usize,
    points: usize,
    derivs: usize,
    weights: Vec<Vec<(usize, f64)>>,
    nodes: Vec<NodeData>,
}

/// What the local residual measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Mode {
    /// det(B + H(w)) − 1.
    MongeAmpere,
    /// Linearization at w = 0: cof(B) : H(w).
    Linearized,
}

impl Operator {
    pub(crate) fn new(grid: &AnnulusGrid, background: &DMatrix<f64>) -> Self {
        let n = grid.n;
        let h = grid.h();
        let da = grid.dangle();
        let weights = derivative_weights(n, h, da);
        let offsets: &[(isize, isize, isize)] = if n == 2 { &POINTS_2 } else { &POINTS_3 };
        let ring = grid.ring_size();
        let nodes = (ring..grid.node_count() - ring)
            .into_par_iter()
            .map(|node| {
                let (i, j, k) = grid.split(node);
                let mut neighbors = [0; MAX_POINTS];
                for (slot, &(di, dj, dk)) in neighbors.iter_mut().zip(offsets) {
                    let ii = (i as isize + di) as usize;
                    *slot = grid.angular_neighbor(ii, j, k, dj, dk);
                }
                let theta = grid.theta(j);
                let q = grid.frame(theta, grid.phi(k));
                let bf = q.transpose() * background * &q;
                let mut bg = [0.0; MAX_ENTRIES];
                for (slot, &(a, b)) in bg.iter_mut().zip(entries(n)) {
                    *slot = bf[(a, b)];
                }
                NodeData {
                    neighbors,
                    map: frame_map(n, grid.radius(i), theta),
                    background: bg,
                }
            })
            .collect();
        Self {
            n,
            ring,
            points: offsets.len(),
            derivs: if n == 2 { 5 } else { 9 },
            weights,
            nodes,
        }
    }

    pub(crate) fn unknowns(&self) -> usize {
        self.nodes.len()
    }

    fn entry_count(&self) -> usize {
        entries(self.n).len()
    }

    /// Frame entries of B + H(w) at interior node `idx`.
    fn matrix_at(&self, idx: usize, w: &[f64]) -> [f64; MAX_ENTRIES] {
        let nd = &self.nodes[idx];
        let mut d = [0.0; MAX_DERIVS];
        for (m, slot) in d.iter_mut().enumerate().take(self.derivs) {
            *slot = self.weights[m].iter().map(|&(p, c)| c * w[nd.neighbors[p]]).sum();
        }
        let mut out = nd.background;
        for (e, slot) in out.iter_mut().enumerate().take(self.entry_count()) {
            *slot += (0..self.derivs).map(|m| nd.map[e][m] * d[m]).sum::<f64>();
        }
        out
    }

    /// Frame entries of H(w) alone.
    pub(crate) fn deviation_hessian_at(&self, idx: usize, w: &[f64]) -> [f64; MAX_ENTRIES] {
        let mut m = self.matrix_at(idx, w);
        for (slot, b) in m.iter_mut().zip(self.nodes[idx].background) {
            *slot -= b;
        }
        m
    }

    fn local(&self, idx: usize, w: &[f64], mode: Mode) -> (f64, [f64; MAX_ENTRIES]) {
        match mode {
            Mode::MongeAmpere => {
                let (det, g) = det_and_gradient(self.n, &self.matrix_at(idx, w));
                (det - 1.0, g)
            }
            Mode::Linearized => {
                let (_, g) = det_and_gradient(self.n, &self.nodes[idx].background);
                let hw = self.deviation_hessian_at(idx, w);
                let v = (0..self.entry_count()).map(|e| g[e] * hw[e]).sum();
                (v, g)
            }
        }
    }

    /// Residual at every interior node; `w` holds all nodes.
    pub(crate) fn residual(&self, w: &[f64], mode: Mode) -> Vec<f64> {
        (0..self.unknowns())
            .into_par_iter()
            .map(|idx| self.local(idx, w, mode).0)
            .collect()
    }

    /// Residual and Jacobian with respect to the interior values.
    pub(crate) fn linearize(&self, w: &[f64], mode: Mode) -> (Vec<f64>, Csr) {
        let nu = self.unknowns();
        let ring = self.ring;
        let rows: Vec<(f64, Vec<(usize, f64)>)> = (0..nu)
            .into_par_iter()
            .map(|idx| {
                let (v, g) = self.local(idx, w, mode);
                let nd = &self.nodes[idx];
                let mut gd = [0.0; MAX_DERIVS];
                for (m, slot) in gd.iter_mut().enumerate().take(self.derivs) {
                    *slot = (0..self.entry_count()).map(|e| g[e] * nd.map[e][m]).sum();
                }
                let mut coef = [0.0; MAX_POINTS];
                for (m, wm) in self.weights.iter().enumerate() {
                    for &(p, c) in wm {
                        coef[p] += gd[m] * c;
                    }
                }
                let row = (0..self.points)
                    .filter_map(|p| {
                        let node = nd.neighbors[p];
                        (node >= ring && node < ring + nu).then(|| (node - ring, coef[p]))
                    })
                    .collect();
                (v, row)
            })
            .collect();
        let (f, rows): (Vec<f64>, Vec<_>) = rows.into_iter().unzip();
        (f, Csr::from_rows(nu, rows))
    }

    /// First interior node (in unknown numbering) where B + H(w) is not
    /// positive definite.
    pub(crate) fn first_nonconvex(&self, w: &[f64]) -> Option<usize> {
        (0..self.unknowns())
            .into_par_iter()
            .find_first(|&idx| !positive_definite(self.n, &self.matrix_at(idx, w)))
    }
}

/// Stencil weights of every coordinate derivative, indexed by stencil point.
fn derivative_weights(n: usize, h: f64, da: f64) -> Vec<Vec<(usize, f64)>> {
    let first = |plus: usize, minus: usize, step: f64| vec![(plus, 0.5 / step), (minus, -0.5 / step)];
    let second = |plus: usize, minus: usize, step: f64| {
        vec![
            (plus, 1.0 / (step * step)),
            (0, -2.0 / (step * step)),
            (minus, 1.0 / (step * step)),
        ]
    };
    let mixed = |pp: usize, pm: usize, mp: usize, mm: usize, s1: f64, s2: f64| {
        let c = 0.25 / (s1 * s2);
        vec![(pp, c), (pm, -c), (mp, -c), (mm, c)]
    };
    if n == 2 {
        vec![
            first(1, 2, h),
            first(3, 4, da),
            second(1, 2, h),
            second(3, 4, da),
            mixed(5, 6, 7, 8, h, da),
        ]
    } else {
        vec![
            first(1, 2, h),
            first(3, 4, da),
            first(5, 6, da),
            second(1, 2, h),
            second(3, 4, da),
            second(5, 6, da),
            mixed(7, 8, 9, 10, h, da),
            mixed(11, 12, 13, 14, h, da),
            mixed(15, 16, 17, 18, da, da),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Cartesian Hessian of w at a node, from the frame entries.
    fn cartesian(grid: &AnnulusGrid, op: &Operator, node: usize, w: &[f64]) -> DMatrix<f64> {
        let (_, j, k) = grid.split(node);
        let e = op.deviation_hessian_at(node - grid.ring_size(), w);
        let q = grid.frame(grid.theta(j), grid.phi(k));
        &q * entries_to_matrix(grid.n, &e[..entries(grid.n).len()]) * q.transpose()
    }

    #[test]
    fn quadratics_give_constant_hessians_up_to_angular_error() {
        for (n, res) in [(2, 64), (3, 32)] {
            let grid = AnnulusGrid::new(n, 1.0, 3.0, res).unwrap();
            let op = Operator::new(&grid, &DMatrix::identity(n, n));
            let q = if n == 2 {
                DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5])
            } else {
                DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 0.5, -0.2, 0.1, -0.2, 1.0])
            };
            let w: Vec<f64> = (0..grid.node_count())
                .map(|node| {
                    let x = nalgebra::DVector::from_vec(grid.position(node));
                    0.5 * (x.transpose() * &q * &x)[(0, 0)]
                })
                .collect();
            let mut worst: f64 = 0.0;
            for node in [
                grid.node(5, 3, 0),
                grid.node(res / 2, 1, 0),
                grid.node(res - 1, 0, res / 4 * (n - 2)),
            ] {
                worst = worst.max((cartesian(&grid, &op, node, &w) - &q).amax());
            }
            // Radial differences of quadratics are exact; angular ones carry O(Δ²) error.
            assert!(worst < 0.05, "n = {n}: {worst}");
        }
    }

    #[test]
    fn radial_functions_have_exact_radial_structure() {
        let grid = AnnulusGrid::new(3, 1.0, 3.0, 16).unwrap();
        let op = Operator::new(&grid, &DMatrix::identity(3, 3));
        let w: Vec<f64> = (0..grid.node_count())
            .map(|node| 1.0 / crate::field::norm(&grid.position(node)))
            .collect();
        let e = op.deviation_hessian_at(grid.node(4, 0, 3) - grid.ring_size(), &w);
        assert!(e[3].abs() < 1e-14 && e[4].abs() < 1e-14 && e[5].abs() < 1e-14);
        assert!((e[1] - e[2]).abs() < 1e-14);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for (n, res) in [(2, 16), (3, 16)] {
            let grid = AnnulusGrid::new(n, 1.0, 2.0, res).unwrap();
            let b = if n == 2 {
                DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 0.25])
            } else {
                DMatrix::identity(3, 3)
            };
            let op = Operator::new(&grid, &b);
            let w: Vec<f64> = (0..grid.node_count())
                .map(|node| {
                    let x = grid.position(node);
                    0.1 * (x[0] * 1.3).sin() + 0.05 * x[1] * x[n - 1]
                })
                .collect();
            let (_, jac) = op.linearize(&w, Mode::MongeAmpere);
            let col = if n == 2 { grid.node(3, 0, 0) } else { grid.node(3, 0, 2) } - grid.ring_size();
            let step = 1e-6;
            let mut wp = w.clone();
            wp[col + grid.ring_size()] += step;
            let fp = op.residual(&wp, Mode::MongeAmpere);
            wp[col + grid.ring_size()] -= 2.0 * step;
            let fm = op.residual(&wp, Mode::MongeAmpere);
            let mut dense = vec![0.0; op.unknowns()];
            for row in 0..jac.n {
                for p in jac.row_ptr[row]..jac.row_ptr[row + 1] {
                    if jac.cols[p] == col {
                        dense[row] = jac.vals[p];
                    }
                }
            }
            for row in 0..op.unknowns() {
                let fd = (fp[row] - fm[row]) / (2.0 * step);
                assert!(
                    (fd - dense[row]).abs() < 1e-4 * (1.0 + fd.abs()),
                    "n = {n}, row {row}: {fd} vs {}",
                    dense[row]
                );
            }
        }
    }
}
