use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use srpo_core::envs::EnvSpec;

use crate::config::Experiment;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub status: SeedStatus,
    /// Paths relative to the manifest's directory.
    pub files: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Mean over members of the final-epoch return, for training runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_mean_return: Option<f64>,
    /// Failed premise-holding checks, for theory runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexamples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: Experiment,
    pub config_hash: String,
    pub toolkit_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub env: EnvSpec,
    pub seeds: Vec<SeedRecord>,
}

impl RunManifest {
    pub fn all_ok(&self) -> bool {
        self.seeds.iter().all(|s| s.status == SeedStatus::Ok)
    }

    pub fn failed_seeds(&self) -> Vec<u64> {
        self.seeds.iter().filter(|s| s.status == SeedStatus::Failed).map(|s| s.seed).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        crate::output::write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}
