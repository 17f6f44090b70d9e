//! Command-line front end, file formats and parallel Monte Carlo for the
//! `kolmosphere-core` solver.
//!
//! The binary exposes four subcommands: `solve`, `density`, `simulate` and
//! `verify`. Each writes its resolved configuration next to its outputs.

pub mod commands;
pub mod exec;
pub mod init;
pub mod io;
pub mod verify;

pub use exec::Parallel;
pub use init::InitSpec;

/// Failure classes, mapped to process exit codes by the binary.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numeric(#[from] kolmosphere_core::Error),

    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numeric(_) | Self::Io(_) => 3,
        }
    }
}
