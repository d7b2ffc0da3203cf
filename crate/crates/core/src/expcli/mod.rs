//! Experiment harness behind the `lerw-lab` binary: configuration, seeded
//! cell execution with resume, summaries and reports.
//!
//! A cell is one `(experiment, n, chain)` triple. Its random stream is fixed
//! by `hash(seed, experiment, n, chain)`, so results do not depend on the
//! order in which cells run, on the thread count, or on interruptions.

pub mod config;
pub mod report;
pub mod run;
pub mod selftest;
pub mod summary;

pub use config::{ExperimentConfig, Kind};
pub use report::report;
pub use run::{resume, run_experiment, RunManifest, RunOptions, RunOutcome};
pub use selftest::selftest;
pub use summary::Summary;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "LERW_LAB_OUT";
pub const DEFAULT_OUT: &str = "lerw-out";
