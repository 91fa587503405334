//! `radial`: samples of a radial solution and its analytic expansion.

use std::fmt::Write as _;

use exterior_core::{radial_expansion, AsymptoticExpansion, RadialExteriorSolution};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, FieldExt};
use crate::{create_out_dir, write_json, write_text, Outcome, Report, RunOptions};

const DEFAULT_SAMPLES: usize = 91;
const DEFAULT_RANGE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialConfig {
    pub n: usize,
    pub a: f64,
    pub r0: f64,
    /// u(r0); 0 when omitted.
    #[serde(default)]
    pub u0: Option<f64>,
    /// Equally spaced radii; `[r0, 10·r0]` with 91 samples when omitted.
    #[serde(default)]
    pub samples: Option<SampleRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRange {
    pub r_min: f64,
    pub r_max: f64,
    pub count: usize,
}

impl RadialConfig {
    /// Fills every default; idempotent.
    pub fn resolve(&self) -> Result<Self, CliError> {
        let u0 = self.u0.unwrap_or(0.0);
        RadialExteriorSolution::new(self.n, self.a, self.r0, u0).field("config")?;
        let samples = self.samples.clone().unwrap_or(SampleRange {
            r_min: self.r0,
            r_max: DEFAULT_RANGE * self.r0,
            count: DEFAULT_SAMPLES,
        });
        if !(samples.r_min >= self.r0) {
            return Err(CliError::config("samples.r_min", "must be at least r0"));
        }
        if !(samples.r_max > samples.r_min) || !samples.r_max.is_finite() {
            return Err(CliError::config("samples.r_max", "must be finite and exceed r_min"));
        }
        if samples.count < 2 {
            return Err(CliError::config("samples.count", "needs at least 2 samples"));
        }
        Ok(Self {
            u0: Some(u0),
            samples: Some(samples),
            ..self.clone()
        })
    }
}

#[derive(Serialize)]
struct RadialResults<'a> {
    residue_coefficient: f64,
    expansion: &'a AsymptoticExpansion,
}

pub fn run(config: RadialConfig, options: &RunOptions) -> Result<Outcome, CliError> {
    let config = config.resolve()?;
    let u =
        RadialExteriorSolution::new(config.n, config.a, config.r0, config.u0.unwrap_or_default()).field("config")?;
    let range = config.samples.as_ref().expect("resolved");

    let mut csv = String::from("r,u,du,d2u\n");
    for k in 0..range.count {
        let t = k as f64 / (range.count - 1) as f64;
        let r = if k + 1 == range.count {
            range.r_max
        } else {
            range.r_min + t * (range.r_max - range.r_min)
        };
        let v = u.value_at(r).field("samples")?;
        let (du, d2u) = u.derivatives(r).field("samples")?;
        let _ = writeln!(csv, "{r:e},{v:e},{du:e},{d2u:e}");
    }

    let expansion = radial_expansion(&u);
    create_out_dir(&options.out)?;
    let files = vec![
        write_text(&options.out, "radial_samples.csv", &csv)?,
        write_json(
            &options.out,
            "radial_expansion.json",
            &Report {
                config: &config,
                results: RadialResults {
                    residue_coefficient: u.residue_coefficient(),
                    expansion: &expansion,
                },
            },
        )?,
    ];
    Ok(Outcome {
        files,
        failures: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(n: usize, a: f64) -> RadialConfig {
        RadialConfig {
            n,
            a,
            r0: 1.0,
            u0: None,
            samples: None,
        }
    }

    #[test]
    fn resolution_is_idempotent() {
        let c = config(3, 1.0).resolve().unwrap();
        assert_eq!(c.resolve().unwrap(), c);
    }

    #[test]
    fn samples_below_r0_are_rejected() {
        let mut c = config(3, 1.0);
        c.samples = Some(SampleRange {
            r_min: 0.5,
            r_max: 2.0,
            count: 10,
        });
        assert!(matches!(c.resolve(), Err(CliError::Config { field, .. }) if field == "samples.r_min"));
    }
}
