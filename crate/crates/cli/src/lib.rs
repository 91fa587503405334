//! Reproducible experiments on exterior solutions of det(D²u) = 1.
//!
//! Every command reads one JSON config, resolves all defaults into a fully
//! specified config, and writes CSV tables and JSON reports that embed the
//! resolved config. Running again from an embedded config reproduces the
//! report byte for byte.

pub mod error;
pub mod radial;
pub mod residue;
pub mod solve_fit;
pub mod source;
pub mod verify;

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

pub use error::{CliError, EXIT_NUMERICAL, EXIT_PASS, EXIT_USAGE, EXIT_VERIFICATION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Radial,
    Residue,
    Verify,
    SolveFit,
}

/// Settings shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Overrides the config seed of commands with randomized quadrature.
    pub seed: Option<u64>,
}

/// Files written by a command and the checks that failed, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass() {
            EXIT_PASS
        } else {
            EXIT_VERIFICATION
        }
    }
}

/// Runs `command` on the JSON text of its config.
pub fn run(command: Command, config: &str, options: &RunOptions) -> Result<Outcome, CliError> {
    match command {
        Command::Radial => radial::run(parse_config(config)?, options),
        Command::Residue => residue::run(parse_config(config)?, options),
        Command::Verify => verify::run(parse_config(config)?, options),
        Command::SolveFit => solve_fit::run(parse_config(config)?, options),
    }
}

/// Reads `path` and runs `command` on it.
pub fn run_file(command: Command, path: &Path, options: &RunOptions) -> Result<Outcome, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    run(command, &text, options)
}

/// Deserializes a config, reporting the path of the offending field.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let field = if field == "." { "config".to_string() } else { field };
        CliError::config(field, e.into_inner().to_string())
    })
}

/// The report shape shared by all commands: the resolved config next to the results.
#[derive(Serialize)]
pub(crate) struct Report<'a, C: Serialize, R: Serialize> {
    pub config: &'a C,
    #[serde(flatten)]
    pub results: R,
}

pub(crate) fn create_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.to_path_buf(),
        source,
    })
}

pub(crate) fn write_text(out: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    let path = out.join(name);
    std::fs::write(&path, text).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

pub(crate) fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Stage {
        stage: "report",
        source: e.into(),
    })?;
    write_text(out, name, &(text + "\n"))
}

/// Largest |a − b| over all pairs.
pub(crate) fn max_pairwise_deviation(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    if values.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_name_the_field() {
        #[derive(serde::Deserialize, Debug)]
        #[serde(deny_unknown_fields)]
        #[allow(dead_code)]
        struct Inner {
            radius: f64,
        }
        #[derive(serde::Deserialize, Debug)]
        #[serde(deny_unknown_fields)]
        #[allow(dead_code)]
        struct Outer {
            grid: Inner,
        }
        match parse_config::<Outer>(r#"{"grid": {"radius": "x"}}"#) {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "grid.radius"),
            other => panic!("{other:?}"),
        }
        match parse_config::<Outer>(r#"{"grid": {"radius": 1.0}, "extra": 2}"#) {
            Err(CliError::Config { field, message }) => assert!(message.contains("extra"), "{field}: {message}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pairwise_deviation_is_the_range() {
        assert_eq!(max_pairwise_deviation(&[1.0, 3.0, 2.0]), 2.0);
        assert_eq!(max_pairwise_deviation(&[]), 0.0);
    }
}
