//! Configuration, CSV reports, binary checkpoints and run orchestration.

pub mod checkpoint;
pub mod config;
pub mod manifest;
pub mod report;
pub mod run;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use config::{parse_config, render_config, ConfigError};
pub use manifest::{CheckResult, RunManifest};
pub use report::{read_reports, ReportSink};
pub use run::{run, run_with, RunOptions, RunOutcome};
