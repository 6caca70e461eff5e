//! Benchmark harness: artifact builds, named ablation runs, raw logs and
//! reports.

pub mod artifacts;
pub mod config;
pub mod registry;
pub mod report;
pub mod run;
pub mod svg;

pub use config::{BenchConfig, Overrides};
