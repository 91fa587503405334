//! `verify`: numerical checks of the identities behind the expansion at infinity.

use exterior_core::field::{DipoleHarmonic, FnField, FundamentalHarmonic, ScalarField};
use exterior_core::fit::shell_directions;
use exterior_core::kelvin::{
    decay_profile, flux_expansion_min_radius, verify_flux_expansion, verify_kelvin_laplace_identity,
    verify_linearization, verify_removability, verify_source_decay,
};
use exterior_core::numerics::geometric_ladder;
use exterior_core::radial::RadialDeviation;
use exterior_core::RadialExteriorSolution;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, FieldExt, StageExt};
use crate::{create_out_dir, write_json, Outcome, Report, RunOptions};

/// Identities in the order they are run.
pub const IDENTITIES: [&str; 5] = ["2.1", "2.2", "2.3", "2.4", "2.6"];
const REMOVABILITY: &str = "removability";
const REMOVABILITY_TOL: f64 = 1e-8;

/// The exterior field E fed to the Kelvin–Laplace check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deviation {
    /// E = u − ½|x|² − c for the radial solution, with its analytic Laplacian.
    #[default]
    Radial,
    /// E = |x|^{2−n}.
    Harmonic,
    /// E = x₁/|x|ⁿ.
    Dipole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Any of "2.1", "2.2", "2.3", "2.4", "2.6" and "removability"; "2.5" is
    /// checked together with "2.6". All numbered identities when omitted.
    #[serde(default)]
    pub identities: Option<Vec<String>>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub r0: Option<f64>,
    #[serde(default)]
    pub deviation: Option<Deviation>,
    /// Coefficient of |x|^{2−n} in the flux expansion check; −d of the radial solution when omitted.
    #[serde(default)]
    pub c_tilde: Option<f64>,
    #[serde(default)]
    pub ladders: Option<Ladders>,
}

/// Radii and points of the individual checks, scaled by r0 when omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladders {
    /// Decay ladder of E and of the linearization source: 10·r0 · 2^k, k = 0..4.
    #[serde(default)]
    pub decay: Option<Vec<f64>>,
    /// Shells of the linearization check: 5·r0 and 40·r0.
    #[serde(default)]
    pub linearization: Option<Vec<f64>>,
    /// Shells inside the unit ball of the Kelvin–Laplace check: 0.3/r0 and 0.6/r0.
    #[serde(default)]
    pub kelvin: Option<Vec<f64>>,
    /// Difference step of the Kelvin–Laplace check: 0.02/r0.
    #[serde(default)]
    pub kelvin_step: Option<f64>,
    /// Spheres of the flux expansion check: 10, 20, 40 (raised past the convexity margin).
    #[serde(default)]
    pub flux: Option<Vec<f64>>,
    /// Sample directions per shell: 20.
    #[serde(default)]
    pub points_per_shell: Option<usize>,
}

fn ladder_or(v: &Option<Vec<f64>>, default: Vec<f64>, field: &str) -> Result<Vec<f64>, CliError> {
    let v = v.clone().unwrap_or(default);
    if v.is_empty() || v.iter().any(|r| !(*r > 0.0) || !r.is_finite()) || v.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CliError::config(
            field,
            "radii must be positive, finite and strictly increasing",
        ));
    }
    Ok(v)
}

impl VerifyConfig {
    /// Fills every default; idempotent.
    pub fn resolve(&self) -> Result<Self, CliError> {
        let n = self.n.unwrap_or(3);
        if n < 3 {
            return Err(CliError::config("n", "the identities need n >= 3"));
        }
        let a = self.a.unwrap_or(1.0);
        let r0 = self.r0.unwrap_or(1.0);
        let u = RadialExteriorSolution::new(n, a, r0, 0.0).field("config")?;

        let mut identities = Vec::new();
        for (k, id) in self
            .identities
            .clone()
            .unwrap_or_else(|| IDENTITIES.map(String::from).to_vec())
            .iter()
            .enumerate()
        {
            let id = match id.as_str() {
                "2.5" => "2.6",
                s if IDENTITIES.contains(&s) || s == REMOVABILITY => s,
                other => {
                    return Err(CliError::config(
                        format!("identities[{k}]"),
                        format!("unknown identity {other:?}"),
                    ))
                }
            };
            if !identities.iter().any(|s: &String| s == id) {
                identities.push(id.to_string());
            }
        }

        let c_tilde = self.c_tilde.unwrap_or(-u.residue_coefficient());
        let l = self.ladders.clone().unwrap_or(Ladders {
            decay: None,
            linearization: None,
            kelvin: None,
            kelvin_step: None,
            flux: None,
            points_per_shell: None,
        });
        let flux_start = 10.0f64.max(2.0 * flux_expansion_min_radius(c_tilde, n));
        let kelvin = ladder_or(&l.kelvin, vec![0.3 / r0, 0.6 / r0], "ladders.kelvin")?;
        if kelvin.iter().any(|&r| r >= 1.0 / r0) {
            return Err(CliError::config(
                "ladders.kelvin",
                "Kelvin shells must lie inside the ball of radius 1/r0",
            ));
        }
        let kelvin_step = l.kelvin_step.unwrap_or(0.02 / r0);
        if !(kelvin_step > 0.0) {
            return Err(CliError::config("ladders.kelvin_step", "must be positive"));
        }
        let points_per_shell = l.points_per_shell.unwrap_or(20);
        if points_per_shell == 0 {
            return Err(CliError::config("ladders.points_per_shell", "must be positive"));
        }
        let ladders = Ladders {
            decay: Some(ladder_or(
                &l.decay,
                geometric_ladder(10.0 * r0, 2.0, 5),
                "ladders.decay",
            )?),
            linearization: Some(ladder_or(
                &l.linearization,
                vec![5.0 * r0, 40.0 * r0],
                "ladders.linearization",
            )?),
            kelvin: Some(kelvin),
            kelvin_step: Some(kelvin_step),
            flux: Some(ladder_or(
                &l.flux,
                geometric_ladder(flux_start, 2.0, 3),
                "ladders.flux",
            )?),
            points_per_shell: Some(points_per_shell),
        };
        Ok(Self {
            identities: Some(identities),
            n: Some(n),
            a: Some(a),
            r0: Some(r0),
            deviation: Some(self.deviation.unwrap_or_default()),
            c_tilde: Some(c_tilde),
            ladders: Some(ladders),
        })
    }
}

fn shells(n: usize, radii: &[f64], count: usize) -> Vec<Vec<f64>> {
    let dirs = shell_directions(n, count);
    radii
        .iter()
        .flat_map(|&r| dirs.iter().map(move |w| w.iter().map(|v| v * r).collect()))
        .collect()
}

fn to_value<T: Serialize>(report: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(report).map_err(|e| CliError::Stage {
        stage: "report",
        source: e.into(),
    })
}

/// Runs one identity check and returns its serialized report and pass flag.
fn check(id: &str, config: &VerifyConfig) -> Result<(serde_json::Value, bool), CliError> {
    let n = config.n.expect("resolved");
    let (a, r0) = (config.a.expect("resolved"), config.r0.expect("resolved"));
    let l = config.ladders.as_ref().expect("resolved");
    let per_shell = l.points_per_shell.expect("resolved");
    let u = RadialExteriorSolution::new(n, a, r0, 0.0).field("config")?;
    let e = RadialDeviation::new(u).field("config")?;
    match id {
        "2.1" => {
            let r = decay_profile(&e, l.decay.as_deref().expect("resolved")).stage(stage(id))?;
            Ok((to_value(&r)?, r.pass))
        }
        "2.2" => {
            let points = shells(n, l.linearization.as_deref().expect("resolved"), per_shell);
            let r = verify_linearization(&u, &points).stage(stage(id))?;
            Ok((to_value(&r)?, r.pass))
        }
        "2.3" => {
            let r = verify_source_decay(&u, l.decay.as_deref().expect("resolved")).stage(stage(id))?;
            Ok((to_value(&r)?, r.pass))
        }
        "2.4" => {
            let points = shells(n, l.kelvin.as_deref().expect("resolved"), per_shell);
            let h = l.kelvin_step.expect("resolved");
            let zero = FnField::new(n, |_: &[f64]| Ok(0.0));
            let r = match config.deviation.expect("resolved") {
                Deviation::Radial => {
                    let g = FnField::new(n, move |x: &[f64]| {
                        e.laplacian_at(x.iter().map(|v| v * v).sum::<f64>().sqrt())
                    });
                    verify_kelvin_laplace_identity(&e, &g, &points, h)
                }
                Deviation::Harmonic => {
                    verify_kelvin_laplace_identity(&FundamentalHarmonic { n, coeff: 1.0 }, &zero, &points, h)
                }
                Deviation::Dipole => {
                    let mut moment = DVector::zeros(n);
                    moment[0] = 1.0;
                    verify_kelvin_laplace_identity(&DipoleHarmonic { moment }, &zero, &points, h)
                }
            }
            .stage(stage(id))?;
            Ok((to_value(&r)?, r.pass))
        }
        "2.6" => {
            let c = config.c_tilde.expect("resolved");
            let r = verify_flux_expansion(c, n, l.flux.as_deref().expect("resolved")).stage(stage(id))?;
            Ok((to_value(&r)?, r.pass))
        }
        _ => {
            let r = verify_removability(&e as &dyn ScalarField, -u.residue_coefficient(), REMOVABILITY_TOL)
                .stage(stage(id))?;
            Ok((to_value(&r)?, r.pass))
        }
    }
}

fn stage(id: &str) -> &'static str {
    match id {
        "2.1" => "identity 2.1",
        "2.2" => "identity 2.2",
        "2.3" => "identity 2.3",
        "2.4" => "identity 2.4",
        "2.6" => "identity 2.6",
        _ => "removability",
    }
}

#[derive(Serialize)]
struct Summary {
    results: Vec<SummaryRow>,
    pass: bool,
}

#[derive(Serialize)]
struct SummaryRow {
    identity: String,
    pass: bool,
    file: String,
}

#[derive(Serialize)]
struct IdentityResults {
    report: serde_json::Value,
}

pub fn run(config: VerifyConfig, options: &RunOptions) -> Result<Outcome, CliError> {
    let config = config.resolve()?;
    create_out_dir(&options.out)?;
    let mut files = Vec::new();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for id in config.identities.as_deref().expect("resolved") {
        let (report, pass) = check(id, &config)?;
        let name = format!("verify_{id}.json");
        files.push(write_json(
            &options.out,
            &name,
            &Report {
                config: &config,
                results: IdentityResults { report },
            },
        )?);
        if !pass {
            failures.push(format!("identity {id}"));
        }
        rows.push(SummaryRow {
            identity: id.clone(),
            pass,
            file: name,
        });
    }
    files.push(write_json(
        &options.out,
        "verify.json",
        &Report {
            config: &config,
            results: Summary {
                pass: failures.is_empty(),
                results: rows,
            },
        },
    )?);
    Ok(Outcome { files, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty() -> VerifyConfig {
        VerifyConfig {
            identities: None,
            n: None,
            a: None,
            r0: None,
            deviation: None,
            c_tilde: None,
            ladders: None,
        }
    }

    #[test]
    fn resolution_fills_defaults_idempotently() {
        let c = empty().resolve().unwrap();
        assert_eq!(c.identities.as_deref().unwrap(), IDENTITIES.map(String::from));
        assert!((c.c_tilde.unwrap() + 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.resolve().unwrap(), c);
    }

    #[test]
    fn flux_check_is_an_alias_and_unknown_identities_are_rejected() {
        let mut c = empty();
        c.identities = Some(vec!["2.5".into(), "2.6".into()]);
        assert_eq!(c.resolve().unwrap().identities.unwrap(), vec!["2.6".to_string()]);
        c.identities = Some(vec!["2.1".into(), "3.1".into()]);
        assert!(matches!(c.resolve(), Err(CliError::Config { field, .. }) if field == "identities[1]"));
    }

    #[test]
    fn planar_verification_is_rejected() {
        let mut c = empty();
        c.n = Some(2);
        assert!(matches!(c.resolve(), Err(CliError::Config { field, .. }) if field == "n"));
    }
}
