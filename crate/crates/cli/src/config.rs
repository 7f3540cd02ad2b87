//! Run configuration: one TOML document per experiment family.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use srpo_core::density::MotivatingConfig;
use srpo_core::envs::EnvSpec;
use srpo_core::srpo::{LearnerConfig, SrpoConfig};
use srpo_core::theory::SuiteConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Solve,
    Occupancy,
    TrainSrpo,
    TrainBaseline,
    TrainBehaviorReg,
    VerifyTheory,
    Density,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Solve,
        Experiment::Occupancy,
        Experiment::TrainSrpo,
        Experiment::TrainBaseline,
        Experiment::TrainBehaviorReg,
        Experiment::VerifyTheory,
        Experiment::Density,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Solve => "solve",
            Experiment::Occupancy => "occupancy",
            Experiment::TrainSrpo => "train-srpo",
            Experiment::TrainBaseline => "train-baseline",
            Experiment::TrainBehaviorReg => "train-behavior-reg",
            Experiment::VerifyTheory => "verify-theory",
            Experiment::Density => "density",
        }
    }

    pub fn is_training(self) -> bool {
        matches!(self, Experiment::TrainSrpo | Experiment::TrainBaseline | Experiment::TrainBehaviorReg)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Settings of the theory suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheorySettings {
    pub n_pairs: usize,
    pub n_random_policies: usize,
}

impl Default for TheorySettings {
    fn default() -> Self {
        Self { n_pairs: 20, n_random_policies: SuiteConfig::default().n_random_policies }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional in the file; the subcommand fills it in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub env: EnvSpec,
    #[serde(default)]
    pub srpo: SrpoConfig,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub theory: TheorySettings,
    #[serde(default)]
    pub density: MotivatingConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub format: Format,
}

impl RunConfig {
    /// Parse a TOML document; errors carry the line, column and offending key.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow::anyhow!("config parse error: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Check the invariants that need no filesystem access.
    pub fn validate(&self) -> Result<()> {
        if self.experiment.is_none() {
            bail!("experiment is not set");
        }
        if self.seeds.is_empty() {
            bail!("seeds: must not be empty");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            bail!("seeds: duplicate seed");
        }
        self.env.validate().context("env")?;
        self.srpo.validate().context("srpo")?;
        self.learner.validate().context("learner")?;
        if self.theory.n_pairs == 0 {
            bail!("theory.n_pairs: must be positive");
        }
        if self.density.n_rollouts == 0 || self.density.horizon == 0 || self.density.n_bins < 2 {
            bail!("density: n_rollouts and horizon must be positive and n_bins at least 2");
        }
        Ok(())
    }

    /// Create the output directory and make sure it accepts files.
    pub fn prepare_output_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.output_dir)
            .with_context(|| format!("output_dir: cannot create {}", self.output_dir.display()))?;
        let probe = self.output_dir.join(".srpo-lab-probe");
        fs::write(&probe, b"").with_context(|| format!("output_dir: {} is not writable", self.output_dir.display()))?;
        fs::remove_file(&probe)?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form: keys sorted at every level, so the
    /// hash ignores field order in the source file.
    pub fn hash(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        let canonical = serde_json::to_string(&value)?;
        Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
    }
}
