//! Experiment runner behind the `gradbal` binary.
//!
//! The pieces the binary is assembled from, importable so integration
//! tests can exercise them directly:
//!
//! - [`config`]: the declarative experiment description (TOML file +
//!   dotted command-line overrides) and its resolution rules.
//! - [`ops`]: the three operations — `run` trains and writes artifacts,
//!   `compare` tabulates finished runs, `ablate` sweeps one mapping
//!   parameter.
//!
//! Every failure is a [`CliError`], which carries the process exit code:
//! bad invocations and bad declarative input exit 1, failures while
//! executing a valid request exit 2.

pub mod config;
pub mod ops;

/// A failure with its process exit code.
///
/// `Usage` (exit 1) covers everything wrong with what the user asked for:
/// unreadable or malformed config files, unknown override keys, invalid
/// parameter values. `Runtime` (exit 2) covers failures while carrying out
/// a valid request: diverging training, unwritable output, incomplete run
/// directories handed to `compare`.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError::Runtime(message.into())
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.message())
    }
}

impl std::error::Error for CliError {}
