//! Seeded, reproducible experiment runner around `srpo-core`.
//!
//! One TOML config describes one experiment family. Every seed writes its
//! own files and the run ends with a `manifest.json` listing them.

pub mod config;
pub mod manifest;
pub mod output;
pub mod runner;
pub mod summary;

pub use config::{Experiment, Format, RunConfig};
pub use manifest::{RunManifest, SeedRecord, SeedStatus};
pub use runner::run;
pub use summary::{summarize, Summary};
