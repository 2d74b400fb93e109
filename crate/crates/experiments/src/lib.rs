//! Config-driven experiments over the `creditlab` core: each run writes a
//! config snapshot, per-replicate and aggregate CSVs, acceptance checks, SVG
//! plots derived from the CSVs, and a SHA-256 manifest.

pub mod config;
pub mod error;
pub mod experiments;
pub mod plot;
pub mod report;
pub mod runner;
pub mod stats;
pub mod table;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{Error, Result};
pub use report::emit_report;
pub use runner::{resolve_output_dir, run_experiment, RunOutcome};
