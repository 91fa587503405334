//! Closed surfaces enclosing the excluded set, with quadrature rules that
//! produce `(point, n̂ dσ)` pairs.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::numerics::{first_primes, gauss_legendre, gauss_legendre_on, radical_inverse, unit_sphere_area};

#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceKind {
    Sphere { center: Vec<f64>, radius: f64 },
    Ellipsoid { center: Vec<f64>, semi_axes: Vec<f64> },
    Box { center: Vec<f64>, half_widths: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum Quadrature {
    /// Equally spaced nodes in the angle of a closed curve (n = 2).
    Trapezoid { nodes: usize },
    /// Gauss–Legendre in cos(colatitude) × trapezoid in azimuth (n = 3).
    GaussTrapezoid { polar: usize, azimuthal: usize },
    /// Tensor Gauss–Legendre on every face of a box.
    TensorGauss { per_axis: usize },
    /// Randomly shifted Halton points mapped to the sphere (n ≥ 4);
    /// the replicate spread gives the error estimate.
    QuasiMonteCarlo {
        points: usize,
        replicates: usize,
        seed: u64,
    },
}

impl Quadrature {
    /// Deterministic default for a surface kind in dimension `n`.
    pub fn default_for(kind: &SurfaceKind, n: usize, seed: u64) -> Self {
        match (kind, n) {
            (SurfaceKind::Box { .. }, 2) => Quadrature::TensorGauss { per_axis: 64 },
            (SurfaceKind::Box { .. }, 3) => Quadrature::TensorGauss { per_axis: 32 },
            (SurfaceKind::Box { .. }, 4) => Quadrature::TensorGauss { per_axis: 12 },
            (SurfaceKind::Box { .. }, _) => Quadrature::TensorGauss { per_axis: 6 },
            (_, 2) => Quadrature::Trapezoid { nodes: 256 },
            (_, 3) => Quadrature::GaussTrapezoid {
                polar: 64,
                azimuthal: 128,
            },
            _ => Quadrature::QuasiMonteCarlo {
                points: 1 << 12,
                replicates: 16,
                seed,
            },
        }
    }

    /// The same rule with half the nodes per direction (for refinement estimates).
    pub(crate) fn coarsened(&self) -> Option<Self> {
        match *self {
            Quadrature::Trapezoid { nodes } => Some(Quadrature::Trapezoid {
                nodes: (nodes / 2).max(4),
            }),
            Quadrature::GaussTrapezoid { polar, azimuthal } => Some(Quadrature::GaussTrapezoid {
                polar: (polar / 2).max(2),
                azimuthal: (azimuthal / 2).max(4),
            }),
            Quadrature::TensorGauss { per_axis } => Some(Quadrature::TensorGauss {
                per_axis: (per_axis / 2).max(1),
            }),
            Quadrature::QuasiMonteCarlo { .. } => None,
        }
    }
}

/// A closed surface together with the quadrature used on it.
///
/// Serialized flat: `{"kind": "sphere", "center": [..], "radius": r, "quadrature": {..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SurfaceRecord", into = "SurfaceRecord")]
pub struct SurfaceSpec {
    pub kind: SurfaceKind,
    pub quadrature: Option<Quadrature>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SurfaceRecord {
    kind: String,
    center: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    semi_axes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    half_widths: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quadrature: Option<Quadrature>,
}

impl TryFrom<SurfaceRecord> for SurfaceSpec {
    type Error = String;

    fn try_from(r: SurfaceRecord) -> std::result::Result<Self, String> {
        let kind = match (r.kind.as_str(), r.radius, r.semi_axes, r.half_widths) {
            ("sphere", Some(radius), None, None) => SurfaceKind::Sphere {
                center: r.center,
                radius,
            },
            ("ellipsoid", None, Some(semi_axes), None) => SurfaceKind::Ellipsoid {
                center: r.center,
                semi_axes,
            },
            ("box", None, None, Some(half_widths)) => SurfaceKind::Box {
                center: r.center,
                half_widths,
            },
            ("sphere", ..) => return Err("sphere needs exactly `center` and `radius`".into()),
            ("ellipsoid", ..) => return Err("ellipsoid needs exactly `center` and `semi_axes`".into()),
            ("box", ..) => return Err("box needs exactly `center` and `half_widths`".into()),
            (other, ..) => return Err(format!("unknown surface kind `{other}`")),
        };
        Ok(SurfaceSpec {
            kind,
            quadrature: r.quadrature,
        })
    }
}

impl From<SurfaceSpec> for SurfaceRecord {
    fn from(s: SurfaceSpec) -> Self {
        let q = s.quadrature;
        match s.kind {
            SurfaceKind::Sphere { center, radius } => SurfaceRecord {
                kind: "sphere".into(),
                center,
                radius: Some(radius),
                semi_axes: None,
                half_widths: None,
                quadrature: q,
            },
            SurfaceKind::Ellipsoid { center, semi_axes } => SurfaceRecord {
                kind: "ellipsoid".into(),
                center,
                radius: None,
                semi_axes: Some(semi_axes),
                half_widths: None,
                quadrature: q,
            },
            SurfaceKind::Box { center, half_widths } => SurfaceRecord {
                kind: "box".into(),
                center,
                radius: None,
                semi_axes: None,
                half_widths: Some(half_widths),
                quadrature: q,
            },
        }
    }
}

/// One quadrature node: a surface point and its weighted outward normal.
#[derive(Debug, Clone)]
pub struct SurfaceNode {
    pub point: DVector<f64>,
    pub normal_weight: DVector<f64>,
}

impl SurfaceSpec {
    pub fn sphere(center: Vec<f64>, radius: f64) -> Self {
        Self {
            kind: SurfaceKind::Sphere { center, radius },
            quadrature: None,
        }
    }

    pub fn ellipsoid(center: Vec<f64>, semi_axes: Vec<f64>) -> Self {
        Self {
            kind: SurfaceKind::Ellipsoid { center, semi_axes },
            quadrature: None,
        }
    }

    pub fn cube(center: Vec<f64>, half_width: f64) -> Self {
        let n = center.len();
        Self {
            kind: SurfaceKind::Box {
                center,
                half_widths: vec![half_width; n],
            },
            quadrature: None,
        }
    }

    pub fn with_quadrature(mut self, q: Quadrature) -> Self {
        self.quadrature = Some(q);
        self
    }

    pub fn center(&self) -> &[f64] {
        match &self.kind {
            SurfaceKind::Sphere { center, .. }
            | SurfaceKind::Ellipsoid { center, .. }
            | SurfaceKind::Box { center, .. } => center,
        }
    }

    pub fn dim(&self) -> usize {
        self.center().len()
    }

    /// Short human-readable label, used in error messages.
    pub fn label(&self) -> String {
        match &self.kind {
            SurfaceKind::Sphere { center, radius } => format!("sphere(center={center:?}, radius={radius})"),
            SurfaceKind::Ellipsoid { center, semi_axes } => {
                format!("ellipsoid(center={center:?}, semi_axes={semi_axes:?})")
            }
            SurfaceKind::Box { center, half_widths } => {
                format!("box(center={center:?}, half_widths={half_widths:?})")
            }
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let (center, extents): (&[f64], Vec<f64>) = match &self.kind {
            SurfaceKind::Sphere { center, radius } => (center, vec![*radius]),
            SurfaceKind::Ellipsoid { center, semi_axes } => {
                if semi_axes.len() != n {
                    return Err(Error::domain(format!("{}: needs {n} semi-axes", self.label())));
                }
                (center, semi_axes.clone())
            }
            SurfaceKind::Box { center, half_widths } => {
                if half_widths.len() != n {
                    return Err(Error::domain(format!("{}: needs {n} half-widths", self.label())));
                }
                (center, half_widths.clone())
            }
        };
        if center.len() != n {
            return Err(Error::domain(format!(
                "{}: center must have {n} coordinates",
                self.label()
            )));
        }
        if extents.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::domain(format!("{}: extents must be positive", self.label())));
        }
        Ok(())
    }

    /// Conservative check that the closed ball `B(center, radius)` lies
    /// strictly inside the surface.
    pub fn encloses_ball(&self, center: &[f64], radius: f64) -> bool {
        let offset: Vec<f64> = self.center().iter().zip(center).map(|(a, b)| b - a).collect();
        let dist = offset.iter().map(|v| v * v).sum::<f64>().sqrt();
        match &self.kind {
            SurfaceKind::Sphere { radius: r, .. } => dist + radius < *r,
            SurfaceKind::Ellipsoid { semi_axes, .. } => {
                dist + radius < semi_axes.iter().cloned().fold(f64::INFINITY, f64::min)
            }
            SurfaceKind::Box { half_widths, .. } => half_widths.iter().zip(&offset).all(|(h, o)| o.abs() + radius < *h),
        }
    }

    /// Largest distance from `point` to any point of the surface (a bound).
    pub fn max_distance_from(&self, point: &[f64]) -> f64 {
        let offset = self
            .center()
            .iter()
            .zip(point)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        offset
            + match &self.kind {
                SurfaceKind::Sphere { radius, .. } => *radius,
                SurfaceKind::Ellipsoid { semi_axes, .. } => semi_axes.iter().cloned().fold(0.0, f64::max),
                SurfaceKind::Box { half_widths, .. } => half_widths.iter().map(|h| h * h).sum::<f64>().sqrt(),
            }
    }

    /// Smallest distance from `point` to the surface (a bound, exact for spheres).
    pub fn min_distance_from(&self, point: &[f64]) -> f64 {
        let offset = self
            .center()
            .iter()
            .zip(point)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let inner = match &self.kind {
            SurfaceKind::Sphere { radius, .. } => *radius,
            SurfaceKind::Ellipsoid { semi_axes, .. }
            | SurfaceKind::Box {
                half_widths: semi_axes, ..
            } => semi_axes.iter().cloned().fold(f64::INFINITY, f64::min),
        };
        inner - offset
    }

    /// The rule in effect: the explicit one or the dimension default.
    pub fn resolved_quadrature(&self, n: usize, seed: u64) -> Quadrature {
        self.quadrature
            .unwrap_or_else(|| Quadrature::default_for(&self.kind, n, seed))
    }

    /// Quadrature nodes for `rule`. QMC rules return one node list per replicate.
    pub fn nodes(&self, n: usize, rule: &Quadrature) -> Result<Vec<Vec<SurfaceNode>>> {
        self.validate(n)?;
        match (&self.kind, rule) {
            (SurfaceKind::Box { center, half_widths }, Quadrature::TensorGauss { per_axis }) => {
                Ok(vec![box_nodes(center, half_widths, *per_axis)])
            }
            (SurfaceKind::Box { .. }, _) => Err(Error::domain(format!(
                "{}: boxes use the tensor Gauss rule",
                self.label()
            ))),
            (SurfaceKind::Sphere { center, radius }, _) => {
                let axes = vec![*radius; n];
                mapped_sphere_nodes(center, &axes, n, rule, self)
            }
            (SurfaceKind::Ellipsoid { center, semi_axes }, _) => mapped_sphere_nodes(center, semi_axes, n, rule, self),
        }
    }
}

/// Unit-sphere nodes ω with weights w.
type WeightedNodes = Vec<(Vec<f64>, f64)>;

/// Unit-sphere node sets, one per replicate.
fn unit_sphere_rule(n: usize, rule: &Quadrature, owner: &SurfaceSpec) -> Result<Vec<WeightedNodes>> {
    match *rule {
        Quadrature::Trapezoid { nodes } if n == 2 => {
            let w = 2.0 * PI / nodes as f64;
            Ok(vec![(0..nodes)
                .map(|k| {
                    let t = w * k as f64;
                    (vec![t.cos(), t.sin()], w)
                })
                .collect()])
        }
        Quadrature::GaussTrapezoid { polar, azimuthal } if n == 3 => {
            let (z, wz) = gauss_legendre(polar);
            let dphi = 2.0 * PI / azimuthal as f64;
            let mut out = Vec::with_capacity(polar * azimuthal);
            for (zi, wi) in z.iter().zip(&wz) {
                let s = (1.0 - zi * zi).sqrt();
                for k in 0..azimuthal {
                    let phi = dphi * k as f64;
                    out.push((vec![s * phi.cos(), s * phi.sin(), *zi], wi * dphi));
                }
            }
            Ok(vec![out])
        }
        Quadrature::QuasiMonteCarlo {
            points,
            replicates,
            seed,
        } => Ok(qmc_sphere(n, points, replicates, seed)),
        _ => Err(Error::domain(format!(
            "{}: quadrature rule {rule:?} is not available in dimension {n}",
            owner.label()
        ))),
    }
}

pub(crate) fn qmc_sphere(n: usize, points: usize, replicates: usize, seed: u64) -> Vec<Vec<(Vec<f64>, f64)>> {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let bases = first_primes(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight = unit_sphere_area(n) / points as f64;
    (0..replicates.max(1))
        .map(|_| {
            let shift: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            (1..=points as u64)
                .map(|i| {
                    let z: Vec<f64> = bases
                        .iter()
                        .zip(&shift)
                        .map(|(&b, s)| {
                            let u = (radical_inverse(i, b) + s).fract();
                            normal.inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16))
                        })
                        .collect();
                    let len = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                    (z.iter().map(|v| v / len).collect(), weight)
                })
                .collect()
        })
        .collect()
}

/// Image of the unit sphere under x = c + Dω with D = diag(axes);
/// n̂ dσ = det(D) D⁻¹ ω dσ_ω.
fn mapped_sphere_nodes(
    center: &[f64],
    axes: &[f64],
    n: usize,
    rule: &Quadrature,
    owner: &SurfaceSpec,
) -> Result<Vec<Vec<SurfaceNode>>> {
    let det: f64 = axes.iter().product();
    let sets = unit_sphere_rule(n, rule, owner)?;
    Ok(sets
        .into_iter()
        .map(|set| {
            set.into_iter()
                .map(|(omega, w)| SurfaceNode {
                    point: DVector::from_fn(n, |i, _| center[i] + axes[i] * omega[i]),
                    normal_weight: DVector::from_fn(n, |i, _| w * det / axes[i] * omega[i]),
                })
                .collect()
        })
        .collect())
}

fn box_nodes(center: &[f64], half: &[f64], per_axis: usize) -> Vec<SurfaceNode> {
    let n = center.len();
    let rules: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .map(|j| gauss_legendre_on(per_axis, center[j] - half[j], center[j] + half[j]))
        .collect();
    let mut out = Vec::new();
    for axis in 0..n {
        let others: Vec<usize> = (0..n).filter(|&j| j != axis).collect();
        let count = per_axis.pow(others.len() as u32);
        for sign in [-1.0, 1.0] {
            for idx in 0..count {
                let mut point = DVector::zeros(n);
                point[axis] = center[axis] + sign * half[axis];
                let mut w = 1.0;
                let mut rem = idx;
                for &j in others.iter().rev() {
                    let k = rem % per_axis;
                    rem /= per_axis;
                    point[j] = rules[j].0[k];
                    w *= rules[j].1[k];
                }
                let mut normal_weight = DVector::zeros(n);
                normal_weight[axis] = sign * w;
                out.push(SurfaceNode { point, normal_weight });
            }
        }
    }
    out
}
