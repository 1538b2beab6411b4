//! Scenario files, reports and the `tighten` / `run` / `selftest` commands
//! behind the `ucmpc` binary.

pub mod commands;
pub mod plot;
pub mod report;
pub mod scenario;
pub mod selftest;

pub use commands::{run, selftest, tighten, Outcome, RunOptions, RunOutput, TightenOutput, VariantRun};
pub use scenario::Scenario;
