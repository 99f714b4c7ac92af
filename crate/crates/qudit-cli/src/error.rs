//! CLI error taxonomy and process exit codes.
//!
//! Every failure is sorted into one of three buckets so scripts can branch
//! on the exit status: bad configuration (2), unusable input data (3), or a
//! numerical failure inside the solvers (4).

use qudit_core::Error as CoreError;

/// Exit code for configuration problems.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for unreadable or malformed input data.
pub const EXIT_DATA: i32 = 3;
/// Exit code for numerical failures (non-convergence, ill-conditioning).
pub const EXIT_NUMERICS: i32 = 4;

/// A classified CLI failure.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The run configuration cannot be parsed or fails validation.
    #[error("config: {0}")]
    Config(String),

    /// An input file is missing, unreadable, or structurally malformed.
    #[error("data: {0}")]
    Data(String),

    /// A solver failed numerically on structurally valid inputs.
    #[error("numerics: {0}")]
    Numerics(String),
}

impl CliError {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerics(_) => EXIT_NUMERICS,
        }
    }

    /// Wraps an error from reading or validating input data.
    pub fn data(err: impl std::fmt::Display) -> Self {
        CliError::Data(err.to_string())
    }
}

/// Default classification of core-library errors.
///
/// Parameter and basis-size complaints can only come from configuration;
/// malformed-data complaints from inputs; everything else is numerical.
/// Call sites with better context (for example a core validation error
/// raised while checking a data file) wrap explicitly instead.
impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        match &err {
            CoreError::InvalidParam { .. }
            | CoreError::CutoffInadequate { .. }
            | CoreError::DimensionTooLarge { .. } => CliError::Config(err.to_string()),
            CoreError::InvalidData(_) => CliError::Data(err.to_string()),
            CoreError::NonDispersive { .. }
            | CoreError::IllConditioned { .. }
            | CoreError::NoConvergence { .. }
            | CoreError::MultiFrequency { .. }
            | CoreError::NoPeaks => CliError::Numerics(err.to_string()),
        }
    }
}

/// Convenience alias for CLI fallible functions.
pub type Result<T> = std::result::Result<T, CliError>;
