//! Pipeline driver for the `safetrack` binary.

pub mod config;
pub mod figures;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use pipeline::{run_all, run_stage, Ctx, Stage};
