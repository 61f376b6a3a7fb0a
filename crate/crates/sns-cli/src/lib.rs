//! Library half of `snsbench`: config parsing, command implementations and
//! output writers, kept separate from the binary so integration tests can
//! drive them directly.

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;

/// CLI-level error, carrying the process exit code:
/// 2 config, 3 numerical, 4 I/O.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(sns_core::Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(e) => write!(f, "I/O error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<sns_core::Error> for CliError {
    fn from(e: sns_core::Error) -> Self {
        CliError::Numerical(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Configures the global rayon pool from `--threads` or `SNSBENCH_THREADS`.
/// All outputs are bit-identical for any worker count; this only controls
/// resource usage.
pub fn init_threads(threads: Option<usize>) {
    let threads = threads.or_else(|| {
        std::env::var("SNSBENCH_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(k) = threads {
        // A second initialisation (e.g. in tests) is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
}
