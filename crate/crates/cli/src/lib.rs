//! Scenario runner: config → field → envelope → funnel → selection → density
//! → transport → Galerkin, with certificates and CSV/JSON artifacts.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod envelope;
pub mod output;
pub mod pipeline;
pub mod registry;
pub mod study;
pub mod verify;

use std::fmt;

pub use config::ScenarioConfig;
pub use pipeline::{run_scenario, RunReport};

/// Exit code when every certificate holds.
pub const EXIT_OK: i32 = 0;
/// Exit code for a certificate or invariant violation.
pub const EXIT_VIOLATION: i32 = 1;
/// Exit code for an invalid configuration.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for a numerical or stage failure.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Stage { stage: &'static str, error: untangled_core::Error },
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Stage { error, .. } if error.is_config() => EXIT_CONFIG,
            _ => EXIT_NUMERICAL,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Stage { stage, error } => write!(f, "[{stage}] {error}"),
            Failure::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

/// Tags a core error with the pipeline stage it came from.
pub fn stage<T>(name: &'static str, r: untangled_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|error| Failure::Stage { stage: name, error })
}

/// Worker pool sized by `UNTANGLED_THREADS` (default: rayon's choice).
pub fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("UNTANGLED_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Failure::Config(format!("UNTANGLED_THREADS must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(Failure::Config("UNTANGLED_THREADS must be >= 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Failure::Io(e.to_string()))
}
