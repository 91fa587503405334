//! Command errors and their process exit codes.

use std::path::PathBuf;

use exterior_core::Error;
use thiserror::Error;

/// Exit status of a run whose checks all passed.
pub const EXIT_PASS: i32 = 0;
/// Exit status of a run with a failing verification.
pub const EXIT_VERIFICATION: i32 = 1;
/// Exit status of usage, configuration, i/o and format errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit status of Newton, linear-solve and fit failures.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// A configuration value is missing, malformed or violates a precondition.
    #[error("invalid config at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A library error, tagged with the pipeline stage that raised it.
    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Error,
    },
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Io { .. } => EXIT_USAGE,
            CliError::Stage { source, .. } => match source {
                Error::Convergence { .. }
                | Error::Convexity { .. }
                | Error::IllConditioned { .. }
                | Error::LinearSolve(_) => EXIT_NUMERICAL,
                Error::Domain(_) | Error::Io(_) | Error::Format(_) => EXIT_USAGE,
            },
        }
    }
}

/// Attaches a stage tag to library results.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> StageExt<T> for exterior_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}

/// Maps a library validation error onto the config field it concerns.
pub(crate) trait FieldExt<T> {
    fn field(self, field: &str) -> Result<T, CliError>;
}

impl<T> FieldExt<T> for exterior_core::Result<T> {
    fn field(self, field: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::config(field, e.to_string()))
    }
}
