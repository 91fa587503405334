//! Tensor-product cubic Lagrange interpolation of grid values in (r, θ, φ).

use nalgebra::{DMatrix, DVector};

use super::grid::AnnulusGrid;
use super::stencil::{entries, entries_to_matrix, frame_map};
use crate::error::{Error, Result};
use crate::field::norm;

/// Weights of the cubic through nodes 0, 1, 2, 3 at s, with first and
/// second derivatives.
fn lagrange(s: f64) -> [[f64; 4]; 3] {
    let mut out = [[0.0; 4]; 3];
    for k in 0..4 {
        let others: Vec<f64> = (0..4).filter(|&m| m != k).map(|m| m as f64).collect();
        let den: f64 = others.iter().map(|&m| k as f64 - m).product();
        let f: Vec<f64> = others.iter().map(|&m| s - m).collect();
        out[0][k] = f[0] * f[1] * f[2] / den;
        out[1][k] = (f[1] * f[2] + f[0] * f[2] + f[0] * f[1]) / den;
        out[2][k] = 2.0 * (f[0] + f[1] + f[2]) / den;
    }
    out
}

/// Base index and local coordinate of a periodic or clamped stencil.
fn locate(t: f64) -> (isize, f64) {
    let base = t.floor() as isize - 1;
    (base, t - base as f64)
}

/// Value, gradient and Hessian of the interpolated w at Cartesian x.
///
/// Requires r_in + h ≤ |x| ≤ R − h.
pub(crate) fn interpolate_deviation(
    grid: &AnnulusGrid,
    w: &[f64],
    x: &[f64],
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let n = grid.n;
    if x.len() != n {
        return Err(Error::domain(format!("point has dimension {}, grid has {n}", x.len())));
    }
    let r = norm(x);
    let h = grid.h();
    let margin = h * (1.0 - 1e-12);
    if !(r >= grid.inner_radius + margin && r <= grid.outer_radius - margin) {
        return Err(Error::domain(format!(
            "|x| = {r} outside the interpolation range [{}, {}] of the grid",
            grid.inner_radius + h,
            grid.outer_radius - h
        )));
    }
    let da = grid.dangle();
    let last = grid.resolution as isize - 3;
    let (ib, sr) = {
        let (b, _) = locate((r - grid.inner_radius) / h);
        let b = b.clamp(0, last);
        (b, (r - grid.inner_radius) / h - b as f64)
    };
    let lr = lagrange(sr);
    let (theta, phi) = if n == 2 {
        (x[1].atan2(x[0]).rem_euclid(2.0 * std::f64::consts::PI), 0.0)
    } else {
        (
            (x[2] / r).clamp(-1.0, 1.0).acos(),
            x[1].atan2(x[0]).rem_euclid(2.0 * std::f64::consts::PI),
        )
    };
    let (jb, st) = if n == 2 {
        locate(theta / da)
    } else {
        locate(theta / da - 0.5)
    };
    let lt = lagrange(st);
    let (kb, sp) = locate(phi / da);
    let lp = if n == 2 {
        [[1.0, 0.0, 0.0, 0.0], [0.0; 4], [0.0; 4]]
    } else {
        lagrange(sp)
    };
    let kcount = if n == 2 { 1 } else { 4 };

    // Accumulated derivatives in the stencil order of the frame map.
    let mut d = [0.0; 9];
    let mut value = 0.0;
    for a in 0..4 {
        let i = (ib + a as isize) as usize;
        for b in 0..4 {
            for c in 0..kcount {
                let node = grid.angular_neighbor(i, 0, 0, jb + b as isize, kb + c as isize);
                let v = w[node];
                let (r0, r1, r2) = (lr[0][a], lr[1][a] / h, lr[2][a] / (h * h));
                let (t0, t1, t2) = (lt[0][b], lt[1][b] / da, lt[2][b] / (da * da));
                let (p0, p1, p2) = (lp[0][c], lp[1][c] / da, lp[2][c] / (da * da));
                value += r0 * t0 * p0 * v;
                if n == 2 {
                    d[0] += r1 * t0 * v;
                    d[1] += r0 * t1 * v;
                    d[2] += r2 * t0 * v;
                    d[3] += r0 * t2 * v;
                    d[4] += r1 * t1 * v;
                } else {
                    d[0] += r1 * t0 * p0 * v;
                    d[1] += r0 * t1 * p0 * v;
                    d[2] += r0 * t0 * p1 * v;
                    d[3] += r2 * t0 * p0 * v;
                    d[4] += r0 * t2 * p0 * v;
                    d[5] += r0 * t0 * p2 * v;
                    d[6] += r1 * t1 * p0 * v;
                    d[7] += r1 * t0 * p1 * v;
                    d[8] += r0 * t1 * p1 * v;
                }
            }
        }
    }
    let map = frame_map(n, r, theta);
    let ne = entries(n).len();
    let e: Vec<f64> = (0..ne).map(|k| (0..9).map(|m| map[k][m] * d[m]).sum()).collect();
    let q = grid.frame(theta, phi);
    let hess = &q * entries_to_matrix(n, &e) * q.transpose();
    let frame_grad = if n == 2 {
        DVector::from_vec(vec![d[0], d[1] / r])
    } else {
        DVector::from_vec(vec![d[0], d[1] / r, d[2] / (r * theta.sin())])
    };
    Ok((value, &q * frame_grad, hess))
}
