//! Small numerical building blocks: Gauss–Legendre rules, adaptive
//! quadrature, reproducible summation, unit-ball volumes and power-law fits.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Nodes are returned in increasing order.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_m.
        let mut x = (PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if m == 0 {
        return (1.0, 0.0);
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(m: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(m);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|wi| wi * half).collect(),
    )
}

fn rule10() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(10))
}

fn gl10<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (x, w) = rule10();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut s = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        s += wi * f(mid + half * xi);
    }
    s * half
}

/// Adaptive bisection driven by a 10-point Gauss–Legendre rule.
///
/// An interval is accepted once the rule on it and on its two halves agree
/// to within its share of the absolute tolerance `tol`. The integration
/// range is pre-split into `initial_panels` pieces so that features smaller
/// than the range (jumps, kinks) are not missed by the first comparison.
pub fn adaptive_gauss_legendre_panels<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
    initial_panels: usize,
) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    let total = (b - a).abs();
    let panels = initial_panels.max(1);
    let step = (b - a) / panels as f64;
    let mut value = 0.0;
    let mut error = 0.0;
    for p in 0..panels {
        let lo = a + step * p as f64;
        let hi = if p + 1 == panels { b } else { lo + step };
        let whole = gl10(&f, lo, hi);
        let (v, e) = refine(&f, lo, hi, whole, tol, total, 0);
        value += v;
        error += e;
    }
    (value, error)
}

/// [`adaptive_gauss_legendre_panels`] with a single initial panel.
pub fn adaptive_gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    adaptive_gauss_legendre_panels(f, a, b, tol, 1).0
}

fn refine<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, total: f64, depth: usize) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let left = gl10(f, a, mid);
    let right = gl10(f, mid, b);
    let split = left + right;
    let diff = (split - whole).abs();
    let share = tol * (b - a).abs() / total;
    let unresolvable = (b - a).abs() <= 64.0 * f64::EPSILON * a.abs().max(b.abs());
    if diff <= share.max(f64::EPSILON * split.abs()) || depth >= 60 || unresolvable {
        return (split, diff);
    }
    let (lv, le) = refine(f, a, mid, left, tol, total, depth + 1);
    let (rv, re) = refine(f, mid, b, right, tol, total, depth + 1);
    (lv + rv, le + re)
}

/// Gauss–Lobatto nodes and weights with `m ≥ 2` points on [−1, 1], ascending.
pub fn gauss_lobatto(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 2, "Gauss–Lobatto needs at least two points");
    let n = m - 1;
    let mut x: Vec<f64> = (0..m).map(|i| -(PI * i as f64 / n as f64).cos()).collect();
    let legendre = |t: f64| {
        let (mut p0, mut p1) = (1.0, t);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        (p1, p0)
    };
    for xi in x.iter_mut().take(n).skip(1) {
        for _ in 0..100 {
            let (pn, pn1) = legendre(*xi);
            let dx = (*xi * pn - pn1) / (m as f64 * pn);
            *xi -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
    }
    let w = x
        .iter()
        .map(|&t| 2.0 / ((n * m) as f64 * legendre(t).0.powi(2)))
        .collect();
    (x, w)
}

fn lobatto11() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_lobatto(11))
}

fn apply_rule<F: Fn(f64) -> f64>(rule: &(Vec<f64>, Vec<f64>), f: &F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Adaptive bisection with an 11-point Gauss–Lobatto rule.
///
/// Same acceptance test as [`adaptive_gauss_legendre_panels`], but every
/// rule samples the panel endpoints, so a jump cannot hide between the
/// outermost node and the end of a panel. Suited to piecewise smooth
/// integrands such as indicator functions.
pub fn adaptive_lobatto_panels<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, initial_panels: usize) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    let rule = lobatto11();
    let total = (b - a).abs();
    let panels = initial_panels.max(1);
    let step = (b - a) / panels as f64;
    let mut value = 0.0;
    let mut error = 0.0;
    for p in 0..panels {
        let lo = a + step * p as f64;
        let hi = if p + 1 == panels { b } else { lo + step };
        let (v, e) = refine_with(rule, &f, lo, hi, apply_rule(rule, &f, lo, hi), tol, total, 0);
        value += v;
        error += e;
    }
    (value, error)
}

#[allow(clippy::too_many_arguments)]
fn refine_with<F: Fn(f64) -> f64>(
    rule: &(Vec<f64>, Vec<f64>),
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    total: f64,
    depth: usize,
) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let left = apply_rule(rule, f, a, mid);
    let right = apply_rule(rule, f, mid, b);
    let split = left + right;
    let diff = (split - whole).abs();
    let share = tol * (b - a).abs() / total;
    let unresolvable = (b - a).abs() <= 64.0 * f64::EPSILON * a.abs().max(b.abs());
    if diff <= share.max(f64::EPSILON * split.abs()) || depth >= 60 || unresolvable {
        return (split, diff);
    }
    let (lv, le) = refine_with(rule, f, a, mid, left, tol, total, depth + 1);
    let (rv, re) = refine_with(rule, f, mid, b, right, tol, total, depth + 1);
    (lv + rv, le + re)
}

/// Pairwise (cascade) summation; the result depends only on the order of
/// `values`, never on how they were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let (lo, hi) = values.split_at(values.len() / 2);
    pairwise_sum(lo) + pairwise_sum(hi)
}

/// Γ(x) for positive integers and half-integers.
pub fn gamma_half_integer(x: f64) -> f64 {
    let twice = (2.0 * x).round();
    assert!(
        twice >= 1.0 && (2.0 * x - twice).abs() < 1e-12,
        "gamma_half_integer expects a positive multiple of 1/2, got {x}"
    );
    let (mut acc, mut y) = if twice as i64 % 2 == 0 {
        (1.0, 1.0)
    } else {
        (PI.sqrt(), 0.5)
    };
    while y + 0.5 < x {
        acc *= y;
        y += 1.0;
    }
    acc
}

/// Volume of the unit ball in ℝⁿ, π^{n/2} / Γ(n/2 + 1).
pub fn unit_ball_volume(n: usize) -> f64 {
    PI.powf(n as f64 / 2.0) / gamma_half_integer(n as f64 / 2.0 + 1.0)
}

/// Surface measure of the unit sphere in ℝⁿ.
pub fn unit_sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

/// Least-squares line through `(log x, log y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero for two points.
    pub slope_stderr: f64,
}

/// Fit `y ≈ C x^p` by least squares on logarithms. Non-positive `y`
/// values are dropped; `None` if fewer than two usable points remain.
pub fn power_law_fit(xs: &[f64], ys: &[f64]) -> Option<PowerLawFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if pts.len() > 2 {
        let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        (sse / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(PowerLawFit {
        slope,
        intercept,
        slope_stderr,
    })
}

/// Observed convergence order from errors at step `h` and `h / ratio`.
pub fn observed_order(coarse: f64, fine: f64, ratio: f64) -> f64 {
    (coarse / fine).ln() / ratio.ln()
}

/// Geometric radius ladder `start, start·ratio, …` with `rungs` entries.
pub fn geometric_ladder(start: f64, ratio: f64, rungs: usize) -> Vec<f64> {
    (0..rungs).map(|k| start * ratio.powi(k as i32)).collect()
}

/// The first `count` primes, used as Halton bases.
pub(crate) fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while primes.len() < count {
        if primes.iter().all(|p| !candidate.is_multiple_of(*p)) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Radical inverse of `index` in base `base` (van der Corput digit reversal).
pub(crate) fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for m in [1usize, 2, 5, 16, 64] {
            let (x, w) = gauss_legendre(m);
            for deg in 0..(2 * m) {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "m={m} deg={deg}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn adaptive_rule_handles_a_kink() {
        let v = adaptive_gauss_legendre(|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-13);
        assert!((v - (0.045 + 0.245)).abs() < 1e-12);
    }

    #[test]
    fn gauss_lobatto_integrates_polynomials_exactly() {
        for m in [2usize, 3, 6, 11] {
            let (x, w) = gauss_lobatto(m);
            assert_eq!((x[0], x[m - 1]), (-1.0, 1.0));
            for deg in 0..(2 * m - 2) {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "m={m} deg={deg}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn lobatto_rule_resolves_jumps_anywhere() {
        for k in 0..200 {
            let jump = -1.0 + 2.0 * (k as f64 + 0.37) / 200.0;
            let (v, _) = adaptive_lobatto_panels(|y: f64| if y <= jump { 1.0 } else { 0.0 }, -1.0, 1.0, 1e-12, 8);
            assert!((v - (jump + 1.0)).abs() < 1e-11, "jump {jump}: {v}");
        }
    }

    #[test]
    fn unit_ball_volumes() {
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!((unit_ball_volume(4) - PI * PI / 2.0).abs() < 1e-14);
        assert!((unit_ball_volume(5) - 8.0 * PI * PI / 15.0).abs() < 1e-13);
        assert!((gamma_half_integer(0.5) - PI.sqrt()).abs() < 1e-15);
        assert!((gamma_half_integer(4.0) - 6.0).abs() < 1e-15);
    }

    #[test]
    fn power_law_fit_recovers_exponent() {
        let xs = geometric_ladder(10.0, 2.0, 5);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-2.5)).collect();
        let fit = power_law_fit(&xs, &ys).unwrap();
        assert!((fit.slope + 2.5).abs() < 1e-12);
        assert!(fit.slope_stderr < 1e-10);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
    }
}
