//! Sparse linear algebra for the Newton systems: CSR storage, ILU(0),
//! restarted GMRES and a banded LU with partial pivoting.

use crate::error::{Error, Result};

/// Compressed sparse rows with sorted, unique column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds from per-row (column, value) lists; duplicates are summed.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[p] * x[self.cols[p]];
            }
            y[i] = s;
        }
    }

    /// Largest |i − j| over the stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (i, p)))
            .map(|(i, p)| i.abs_diff(self.cols[p]))
            .max()
            .unwrap_or(0)
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }
}

/// Incomplete LU factorization with the sparsity pattern of the matrix.
pub struct Ilu0 {
    lu: Csr,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &Csr) -> Result<Self> {
        let mut lu = a.clone();
        let n = a.n;
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            for p in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.cols[p] == i {
                    diag[i] = p;
                }
            }
            if diag[i] == usize::MAX {
                return Err(Error::LinearSolve(format!("ILU(0): missing diagonal in row {i}")));
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for p in start..end {
                pos[lu.cols[p]] = p;
            }
            for p in start..end {
                let k = lu.cols[p];
                if k >= i {
                    break;
                }
                let pivot = lu.vals[diag[k]];
                let factor = lu.vals[p] / pivot;
                lu.vals[p] = factor;
                for q in diag[k] + 1..lu.row_ptr[k + 1] {
                    let target = pos[lu.cols[q]];
                    if target != usize::MAX {
                        lu.vals[target] -= factor * lu.vals[q];
                    }
                }
            }
            for p in start..end {
                pos[lu.cols[p]] = usize::MAX;
            }
            if lu.vals[diag[i]] == 0.0 || !lu.vals[diag[i]].is_finite() {
                return Err(Error::LinearSolve(format!("ILU(0): zero pivot in row {i}")));
            }
        }
        Ok(Self { lu, diag })
    }

    /// Solves (LU) x = b in place.
    pub fn apply(&self, x: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut s = x[i];
            for p in lu.row_ptr[i]..self.diag[i] {
                s -= lu.vals[p] * x[lu.cols[p]];
            }
            x[i] = s;
        }
        for i in (0..lu.n).rev() {
            let mut s = x[i];
            for p in self.diag[i] + 1..lu.row_ptr[i + 1] {
                s -= lu.vals[p] * x[lu.cols[p]];
            }
            x[i] = s / lu.vals[self.diag[i]];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of a Krylov solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Right-preconditioned restarted GMRES for A x = b from x = 0.
///
/// Stops when ‖b − Ax‖ ≤ `tol`·‖b‖; fails after `max_iterations`.
pub fn gmres(
    a: &Csr,
    b: &[f64],
    precond: &Ilu0,
    tol: f64,
    restart: usize,
    max_iterations: usize,
) -> Result<(Vec<f64>, KrylovStats)> {
    let n = a.n;
    let mut x = vec![0.0; n];
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((
            x,
            KrylovStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let m = restart.max(1);
    let mut total = 0;
    let mut r = b.to_vec();
    let mut w = vec![0.0; n];
    loop {
        let beta = norm2(&r);
        if beta <= tol * bnorm {
            return Ok((
                x,
                KrylovStats {
                    iterations: total,
                    relative_residual: beta / bnorm,
                },
            ));
        }
        if total >= max_iterations {
            return Err(Error::LinearSolve(format!(
                "GMRES stalled at relative residual {:.3e} after {total} iterations",
                beta / bnorm
            )));
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && total < max_iterations {
            let mut zk = v[k].clone();
            precond.apply(&mut zk);
            a.matvec(&zk, &mut w);
            z.push(zk);
            for (i, vi) in v.iter().enumerate() {
                let hik = dot(&w, vi);
                h[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(vi) {
                    *wj -= hik * vj;
                }
            }
            let hnext = norm2(&w);
            h[k + 1][k] = hnext;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                return Err(Error::LinearSolve("GMRES breakdown".into()));
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k += 1;
            if g[k].abs() <= tol * bnorm || hnext == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / hnext).collect());
        }
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (zi, yi) in z.iter().zip(&y) {
            for (xj, zj) in x.iter_mut().zip(zi) {
                *xj += yi * zj;
            }
        }
        a.matvec(&x, &mut w);
        for i in 0..n {
            r[i] = b[i] - w[i];
        }
    }
}

/// LU factorization with partial pivoting of a banded matrix.
///
/// Row r is stored densely from column `start[r]` over `kl + ku + kl + 1`
/// entries, which covers all fill-in created by row interchanges.
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    start: Vec<isize>,
    rows: Vec<Vec<f64>>,
    pivots: Vec<usize>,
    multipliers: Vec<Vec<f64>>,
}

impl BandedLu {
    pub fn factor(a: &Csr) -> Result<Self> {
        let n = a.n;
        let bw = a.bandwidth();
        let (kl, ku) = (bw, bw);
        let width = 2 * kl + ku + 1;
        let mut start: Vec<isize> = (0..n).map(|i| i as isize - kl as isize).collect();
        let mut rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row = vec![0.0; width];
                for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                    row[(a.cols[p] as isize - start[i]) as usize] += a.vals[p];
                }
                row
            })
            .collect();
        let mut pivots = Vec::with_capacity(n);
        let mut multipliers = Vec::with_capacity(n);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let at = |rows: &Vec<Vec<f64>>, start: &Vec<isize>, r: usize, c: usize| {
                rows[r][(c as isize - start[r]) as usize]
            };
            let mut p = k;
            let mut best = at(&rows, &start, k, k).abs();
            for r in k + 1..=last {
                let v = at(&rows, &start, r, k).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return Err(Error::LinearSolve(format!("singular banded matrix at column {k}")));
            }
            rows.swap(k, p);
            start.swap(k, p);
            pivots.push(p);
            let pivot = at(&rows, &start, k, k);
            let hi = (k + kl + ku).min(n - 1);
            let mut mult = Vec::with_capacity(last - k);
            let (head, tail) = rows.split_at_mut(k + 1);
            let prow = &head[k];
            let pstart = start[k];
            for (t, row) in tail.iter_mut().take(last - k).enumerate() {
                let r = k + 1 + t;
                let off = |c: usize| (c as isize - start[r]) as usize;
                let f = row[off(k)] / pivot;
                mult.push(f);
                if f != 0.0 {
                    row[off(k)] = 0.0;
                    for c in k + 1..=hi {
                        row[off(c)] -= f * prow[(c as isize - pstart) as usize];
                    }
                }
            }
            multipliers.push(mult);
        }
        Ok(Self {
            n,
            kl,
            ku,
            start,
            rows,
            pivots,
            multipliers,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.pivots[k]);
            let xk = x[k];
            for (t, f) in self.multipliers[k].iter().enumerate() {
                x[k + 1 + t] -= f * xk;
            }
        }
        for k in (0..n).rev() {
            let hi = (k + self.kl + self.ku).min(n - 1);
            let row = &self.rows[k];
            let off = |c: usize| (c as isize - self.start[k]) as usize;
            let mut s = x[k];
            for c in k + 1..=hi {
                s -= row[off(c)] * x[c];
            }
            x[k] = s / row[off(k)];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Nonsymmetric periodic convection–diffusion matrix with wrap-around entries.
    fn test_matrix(n: usize) -> Csr {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 4.0 + 0.1 * i as f64), ((i + 1) % n, -1.3), ((i + n - 1) % n, -0.7)];
                if i + 5 < n {
                    r.push((i + 5, 0.2));
                }
                r
            })
            .collect();
        Csr::from_rows(n, rows)
    }

    fn residual(a: &Csr, x: &[f64], b: &[f64]) -> f64 {
        let mut y = vec![0.0; a.n];
        a.matvec(x, &mut y);
        y.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = Csr::from_rows(2, vec![vec![(1, 1.0), (0, 2.0), (1, 3.0)], vec![(1, 1.0)]]);
        assert_eq!(a.cols, vec![0, 1, 1]);
        assert_eq!(a.vals, vec![2.0, 4.0, 1.0]);
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let a = test_matrix(200);
        let b: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let ilu = Ilu0::new(&a).unwrap();
        let (x, stats) = gmres(&a, &b, &ilu, 1e-12, 20, 500).unwrap();
        assert!(residual(&a, &x, &b) < 1e-10, "{stats:?}");
    }

    #[test]
    fn banded_lu_matches_system() {
        let a = test_matrix(60);
        let b: Vec<f64> = (0..60).map(|i| 1.0 + i as f64).collect();
        let lu = BandedLu::factor(&a).unwrap();
        assert!(residual(&a, &lu.solve(&b), &b) < 1e-11);
    }

    #[test]
    fn banded_lu_pivots() {
        let a = Csr::from_rows(
            3,
            vec![
                vec![(0, 0.0), (1, 1.0)],
                vec![(0, 1.0), (1, 0.0), (2, 1.0)],
                vec![(1, 1.0), (2, 3.0)],
            ],
        );
        let lu = BandedLu::factor(&a).unwrap();
        let b = [1.0, 2.0, 3.0];
        assert!(residual(&a, &lu.solve(&b), &b) < 1e-14);
    }
}
