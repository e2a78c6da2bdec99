//! Configuration-driven experiment runner behind the `divflow` binary.
//!
//! A run takes one [`ExperimentConfig`], evaluates the experiment it names and
//! returns a [`Report`]. Reports are deterministic in `(config, seed)`: all
//! parallel work is reduced in sample order, so the thread count never shows
//! up in the output.

pub mod config;
mod experiments;
pub mod report;

use std::path::Path;

use thiserror::Error;

pub use config::{Expectation, ExperimentConfig, ExperimentKind, Ladder, Outputs};
pub use report::{Check, Outcome, Report};

/// Exit status of a run whose checks all passed.
pub const EXIT_PASS: i32 = 0;
/// Exit status of a run with at least one failed check.
pub const EXIT_FAIL: i32 = 1;
/// Exit status for usage, configuration and I/O errors.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        EXIT_USAGE
    }
}

/// Runs `config` on the current rayon pool.
pub fn run(config: &ExperimentConfig) -> Result<Outcome, RunError> {
    experiments::run(config)
}

/// Runs `config` on a dedicated pool of `threads` workers.
pub fn run_with_threads(config: &ExperimentConfig, threads: usize) -> Result<Outcome, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RunError::Usage(format!("cannot build a {threads}-thread pool: {e}")))?;
    pool.install(|| run(config))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    std::fs::write(path, contents).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Catalog listing, one line per manifold: id, fields, description.
pub fn zoo_listing() -> String {
    divflow::zoo::list_zoo()
        .iter()
        .map(|e| format!("{}\t[{}]\t{}\n", e.id, e.fields.join(", "), e.description))
        .collect()
}
