//! State-regularized policy optimization on tabular families.
//!
//! A shared replay buffer feeds a value-ranked partition of states, a logistic
//! discriminator turns that partition into a density-ratio estimate, and the
//! log-ratio is added to rewards of a context-conditioned soft Q-learner.

mod buffer;
mod discriminator;
mod kl;
mod learner;
mod partition;

pub use buffer::{ReplayBuffer, Transition};
pub use discriminator::{augment_reward, density_ratio, train_discriminator, Discriminator, FeatureMap, OUTPUT_CLAMP};
pub use kl::{kl_identity_check, KlIdentity};
pub use learner::{
    baseline_train, behavior_regularized_train, srpo_train, FeatureKind, LearnerConfig, LogRow, Regularization,
    TrainOutput,
};
pub use partition::{partition_batch, partition_size, Partition, PartitionScore};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// SRPO hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrpoConfig {
    /// Lagrange multiplier weight on the log density ratio.
    pub lambda: f64,
    /// Fraction of a batch placed on each side of the partition.
    pub rho: f64,
    pub batch_size: usize,
    pub disc_lr: f64,
    pub disc_epochs: usize,
    pub ratio_clip: (f64, f64),
    pub score: PartitionScore,
    /// The discriminator is retrained from scratch every this many epochs.
    pub disc_interval: usize,
}

impl Default for SrpoConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            rho: 0.2,
            batch_size: 512,
            disc_lr: 5.0,
            disc_epochs: 300,
            ratio_clip: (0.05, 20.0),
            score: PartitionScore::Reward,
            disc_interval: 10,
        }
    }
}

impl SrpoConfig {
    /// λ = 0.3, the stronger regularization profile.
    pub fn strong() -> Self {
        Self { lambda: 0.3, ..Self::default() }
    }

    /// ρ = 0.5, the profile for datasets that already mix medium and expert data.
    pub fn medium_expert() -> Self {
        Self { rho: 0.5, ..Self::default() }
    }

    /// Look up a named preset: `default`, `strong`, `medium_expert`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default()),
            "strong" => Some(Self::strong()),
            "medium_expert" => Some(Self::medium_expert()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0,1)");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if !(self.disc_lr > 0.0) || self.disc_epochs == 0 {
            return bad("disc_lr and disc_epochs must be positive");
        }
        let (lo, hi) = self.ratio_clip;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return bad("ratio_clip must satisfy 0 < lower < upper");
        }
        if self.disc_interval == 0 {
            return bad("disc_interval must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_and_validation() {
        assert_eq!(SrpoConfig::preset("default").unwrap().lambda, 0.1);
        assert_eq!(SrpoConfig::preset("strong").unwrap().lambda, 0.3);
        assert_eq!(SrpoConfig::preset("medium_expert").unwrap().rho, 0.5);
        assert_eq!(SrpoConfig::default().rho, 0.2);
        assert!(SrpoConfig::preset("nope").is_none());
        assert!(SrpoConfig::default().validate().is_ok());
        assert!(SrpoConfig { rho: 1.0, ..Default::default() }.validate().is_err());
        assert!(SrpoConfig { ratio_clip: (2.0, 1.0), ..Default::default() }.validate().is_err());
        assert!(SrpoConfig { lambda: -0.1, ..Default::default() }.validate().is_err());
    }
}
