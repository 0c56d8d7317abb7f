//! Experiment runner for the contour solver: TOML experiment specs, one
//! runner per experiment kind, and reproducible artifacts.

pub mod artifacts;
pub mod error;
pub mod experiments;
pub mod field_io;
pub mod spec;

pub use error::{HarnessError, Result};
pub use experiments::{run_experiment, Assertion, RunOutcome, Summary};
pub use spec::{ExperimentKind, ExperimentSpec};

pub const EXIT_OK: i32 = 0;
/// Config parse, validation or IO error.
pub const EXIT_CONFIG: i32 = 1;
/// The curve lost well-stretchedness.
pub const EXIT_DEGENERATE: i32 = 2;
/// At least one assertion failed.
pub const EXIT_ASSERTION: i32 = 3;

/// Env var that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "PESKIN_OUT_DIR";
