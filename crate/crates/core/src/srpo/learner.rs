//! Context-conditioned tabular soft Q-learning with SRPO reward augmentation.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    augment_reward, partition_batch, train_discriminator, Discriminator, FeatureMap, PartitionScore, ReplayBuffer,
    SrpoConfig, Transition,
};
use crate::error::{Error, Result};
use crate::mdp::{HipMdpFamily, TabularMdp};
use crate::rng;
use crate::solvers::{self, fix_row_sum, PolicyTable};

/// What the discriminator sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularization {
    /// States only (SRPO).
    State,
    /// State-action pairs (behavior-regularized ablation).
    StateAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    #[default]
    OneHot,
    /// State coordinates (concatenated with action coordinates for state-action keys).
    Coords,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub epochs: usize,
    /// Episodes collected from every member per epoch.
    pub episodes_per_member: usize,
    pub horizon: usize,
    pub q_lr: f64,
    /// Step size reached at the last epoch; the schedule is geometric from `q_lr`.
    pub q_lr_final: f64,
    /// Boltzmann temperature of the soft Q-learner.
    pub temperature: f64,
    pub buffer_capacity: usize,
    pub updates_per_epoch: usize,
    pub update_batch: usize,
    pub features: FeatureKind,
    /// Start every Q entry at the largest achievable augmented return instead of zero.
    pub optimistic_init: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            episodes_per_member: 2,
            horizon: 40,
            q_lr: 0.1,
            q_lr_final: 0.1,
            temperature: 0.05,
            buffer_capacity: 20_000,
            updates_per_epoch: 4,
            update_batch: 128,
            features: FeatureKind::OneHot,
            optimistic_init: false,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.episodes_per_member == 0 || self.horizon == 0 {
            return Err(Error::InvalidArgument("epochs, episodes_per_member and horizon must be positive".into()));
        }
        if !(self.q_lr > 0.0 && self.q_lr <= 1.0 && self.q_lr_final > 0.0 && self.q_lr_final <= 1.0) {
            return Err(Error::InvalidArgument("q_lr and q_lr_final must lie in (0,1]".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument("temperature must be positive".into()));
        }
        if self.buffer_capacity == 0 || self.update_batch == 0 {
            return Err(Error::InvalidArgument("buffer_capacity and update_batch must be positive".into()));
        }
        Ok(())
    }

    /// Q-learning step size used in `epoch`.
    pub fn step_size(&self, epoch: usize) -> f64 {
        if self.epochs < 2 {
            return self.q_lr;
        }
        let frac = epoch.min(self.epochs - 1) as f64 / (self.epochs - 1) as f64;
        self.q_lr * (self.q_lr_final / self.q_lr).powf(frac)
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub theta_idx: usize,
    /// Exact return of the member's current greedy policy.
    pub mean_return: f64,
    /// Final loss of the most recent discriminator, if one has been trained.
    pub disc_loss: Option<f64>,
    pub lambda: f64,
    pub rho: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Greedy policy per member.
    pub policies: Vec<PolicyTable>,
    pub log: Vec<LogRow>,
    /// Final Q tables, `[member][s][a]`.
    pub q: Vec<Vec<Vec<f64>>>,
    /// SHA-256 of the transitions collected in each epoch.
    pub collection_digests: Vec<String>,
    /// The most recently trained discriminator.
    pub discriminator: Option<Discriminator>,
}

impl TrainOutput {
    /// Mean over members of the last epoch's returns.
    pub fn final_mean_return(&self) -> f64 {
        let last = self.log.iter().map(|r| r.epoch).max().unwrap_or(0);
        let rows: Vec<f64> = self.log.iter().filter(|r| r.epoch == last).map(|r| r.mean_return).collect();
        rows.iter().sum::<f64>() / rows.len().max(1) as f64
    }

    /// Last-epoch return of one member.
    pub fn final_return_of(&self, theta_idx: usize) -> Option<f64> {
        self.log.iter().rev().find(|r| r.theta_idx == theta_idx).map(|r| r.mean_return)
    }
}

fn soft_value(row: &[f64], tau: f64) -> f64 {
    let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi + tau * row.iter().map(|q| ((q - hi) / tau).exp()).sum::<f64>().ln()
}

fn boltzmann(q: &[Vec<f64>], tau: f64) -> PolicyTable {
    let probs = q
        .iter()
        .map(|row| {
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = row.iter().map(|x| ((x - hi) / tau).exp()).collect();
            let total: f64 = w.iter().sum();
            let mut p: Vec<f64> = w.iter().map(|x| x / total).collect();
            fix_row_sum(&mut p);
            p
        })
        .collect();
    PolicyTable { probs }
}

fn greedy(q: &[Vec<f64>]) -> PolicyTable {
    let n_actions = q[0].len();
    let actions: Vec<usize> = q.iter().map(|row| solvers::argmax(row)).collect();
    PolicyTable::deterministic(&actions, n_actions)
}

fn digest(ts: &[Transition]) -> String {
    let mut h = Sha256::new();
    for t in ts {
        h.update((t.s as u64).to_le_bytes());
        h.update((t.a as u64).to_le_bytes());
        h.update(t.r.to_bits().to_le_bytes());
        h.update((t.s_next as u64).to_le_bytes());
        h.update((t.theta_idx as u64).to_le_bytes());
        h.update([t.done as u8]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn feature_map(m: &TabularMdp, kind: FeatureKind, reg: Regularization) -> Result<FeatureMap> {
    let (ns, na) = (m.n_states(), m.n_actions());
    Ok(match (kind, reg) {
        (FeatureKind::OneHot, Regularization::State) => FeatureMap::OneHot { n_keys: ns },
        (FeatureKind::OneHot, Regularization::StateAction) => FeatureMap::OneHot { n_keys: ns * na },
        (FeatureKind::Coords, reg) => {
            let sc = m.state_coords().ok_or(Error::MissingCoords)?;
            match reg {
                Regularization::State => FeatureMap::Coords { coords: sc.to_vec() },
                Regularization::StateAction => {
                    let ac = m
                        .action_coords()
                        .ok_or_else(|| Error::InvalidArgument("action_coords required for coordinate features".into()))?;
                    let coords = (0..ns)
                        .flat_map(|s| (0..na).map(move |a| sc[s].iter().chain(&ac[a]).copied().collect()))
                        .collect();
                    FeatureMap::Coords { coords }
                }
            }
        }
    })
}

/// Upper bound on any discounted return of the augmented reward.
fn optimistic_value(family: &HipMdpFamily, cfg: &SrpoConfig) -> f64 {
    let r_hi = family
        .members()
        .iter()
        .flat_map(|m| m.reward().iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let bonus = if cfg.lambda > 0.0 { cfg.lambda * cfg.ratio_clip.1.ln() } else { 0.0 };
    (r_hi + bonus) / (1.0 - family.member(0).gamma())
}

fn key_of(t: &Transition, n_actions: usize, reg: Regularization) -> usize {
    match reg {
        Regularization::State => t.s,
        Regularization::StateAction => t.s * n_actions + t.a,
    }
}

/// The shared training loop. Random streams: rollouts, Q-update minibatches and
/// discriminator batches each own a generator derived from `rng_seed`, so the
/// discriminator never perturbs the trajectories.
fn train(
    family: &HipMdpFamily,
    cfg: &SrpoConfig,
    learner: &LearnerConfig,
    rng_seed: u64,
    reg: Regularization,
) -> Result<TrainOutput> {
    cfg.validate()?;
    learner.validate()?;
    let first = family.member(0);
    let (ns, na) = (first.n_states(), first.n_actions());
    let gamma = first.gamma();
    let tau = learner.temperature;
    let fmap = feature_map(first, learner.features, reg)?;

    let mut rollout_rng = rng::stream(rng_seed, "srpo/rollout");
    let mut replay_rng = rng::stream(rng_seed, "srpo/replay");
    let mut disc_rng = rng::stream(rng_seed, "srpo/discriminator");

    let q0 = if learner.optimistic_init { optimistic_value(family, cfg) } else { 0.0 };
    let mut q = vec![vec![vec![q0; na]; ns]; family.len()];
    let mut buffer = ReplayBuffer::new(learner.buffer_capacity)?;
    let mut disc: Option<Discriminator> = None;
    let mut log = Vec::with_capacity(learner.epochs * family.len());
    let mut digests = Vec::with_capacity(learner.epochs);

    for epoch in 0..learner.epochs {
        let mut collected = Vec::new();
        for (theta, m) in family.members().iter().enumerate() {
            let behaviour = boltzmann(&q[theta], tau);
            for _ in 0..learner.episodes_per_member {
                collected.extend(solvers::rollout(m, &behaviour, learner.horizon, theta, &mut rollout_rng));
            }
        }
        digests.push(digest(&collected));
        buffer.extend(collected);

        // With λ = 0 the discriminator would never be used.
        if cfg.lambda > 0.0 && epoch % cfg.disc_interval == 0 {
            let mut batch = buffer.sample(cfg.batch_size, &mut disc_rng);
            if cfg.score == PartitionScore::Value {
                for t in &mut batch {
                    t.value_score = Some(soft_value(&q[t.theta_idx][t.s], tau));
                }
            }
            if batch.len() >= 2 {
                let part = partition_batch(&batch, cfg.rho, cfg.score)?;
                let real: Vec<usize> = part.real.iter().map(|&i| key_of(&batch[i], na, reg)).collect();
                let fake: Vec<usize> = part.fake.iter().map(|&i| key_of(&batch[i], na, reg)).collect();
                let seed = rng::child_seed(rng_seed, "srpo/disc-init", epoch as u64);
                disc = Some(train_discriminator(&real, &fake, fmap.clone(), cfg, seed)?);
            }
        }

        let lr = learner.step_size(epoch);
        for _ in 0..learner.updates_per_epoch {
            for t in buffer.sample(learner.update_batch, &mut replay_rng) {
                let r = match &disc {
                    Some(d) => augment_reward(t.r, d, key_of(&t, na, reg), cfg.lambda, cfg.ratio_clip),
                    _ => t.r,
                };
                let qm = &mut q[t.theta_idx];
                let target = r + gamma * soft_value(&qm[t.s_next], tau);
                let cell = &mut qm[t.s][t.a];
                *cell += lr * (target - *cell);
            }
        }

        let disc_loss = disc.as_ref().map(Discriminator::final_loss);
        for (theta, m) in family.members().iter().enumerate() {
            let mean_return = solvers::expected_return(m, &greedy(&q[theta]))?;
            log.push(LogRow { epoch, theta_idx: theta, mean_return, disc_loss, lambda: cfg.lambda, rho: cfg.rho, seed: rng_seed });
        }
    }

    let policies = q.iter().map(|qt| greedy(qt)).collect();
    Ok(TrainOutput { policies, log, q, collection_digests: digests, discriminator: disc })
}

/// SRPO: state-density-ratio reward augmentation on top of the soft Q-learner.
pub fn srpo_train(family: &HipMdpFamily, cfg: &SrpoConfig, learner: &LearnerConfig, rng_seed: u64) -> Result<TrainOutput> {
    train(family, cfg, learner, rng_seed, Regularization::State)
}

/// The same pipeline with λ = 0.
pub fn baseline_train(family: &HipMdpFamily, learner: &LearnerConfig, rng_seed: u64) -> Result<TrainOutput> {
    let cfg = SrpoConfig { lambda: 0.0, ..SrpoConfig::default() };
    train(family, &cfg, learner, rng_seed, Regularization::State)
}

/// Ablation: the discriminator and the augmentation act on state-action pairs.
pub fn behavior_regularized_train(
    family: &HipMdpFamily,
    cfg: &SrpoConfig,
    learner: &LearnerConfig,
    rng_seed: u64,
) -> Result<TrainOutput> {
    train(family, cfg, learner, rng_seed, Regularization::StateAction)
}
