//! Batch command-line tools for inertial parameter identification.
//!
//! The library half of the binary: file formats, the conic-program text
//! interchange, and the subcommand implementations, so that integration
//! tests drive the same code paths as the executable.

pub mod commands;
pub mod formats;
pub mod icp;

/// Command errors, classified by exit code: usage errors exit 1, data
/// errors 2, solver failures 3.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad invocation or missing input file.
    #[error("{0}")]
    Usage(String),
    /// Malformed or invalid input data.
    #[error("{0}")]
    Data(String),
    /// The optimizer did not reach a certified optimum.
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}
