//! Cross-seed aggregation of training manifests.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use serde::Serialize;

use crate::config::Experiment;
use crate::manifest::{RunManifest, SeedStatus};

/// Mean ± sample standard deviation of the final returns of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigSummary {
    pub experiment: Experiment,
    pub config_hash: String,
    pub n_seeds: usize,
    pub mean: f64,
    pub std: f64,
}

/// One seed present in both an SRPO run and a comparison run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedRow {
    pub comparison: Experiment,
    pub seed: u64,
    pub srpo: f64,
    pub other: f64,
    /// `srpo − other`.
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Summary {
    pub configs: Vec<ConfigSummary>,
    pub paired: Vec<PairedRow>,
}

/// `(mean, std)` with the `n − 1` denominator; the std of one value is 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn returns_by_seed(m: &RunManifest) -> BTreeMap<u64, f64> {
    m.seeds
        .iter()
        .filter(|s| s.status == SeedStatus::Ok)
        .filter_map(|s| s.final_mean_return.map(|r| (s.seed, r)))
        .collect()
}

/// Aggregate training manifests that share one environment.
///
/// Manifests with the same experiment and config hash are pooled. Each
/// non-SRPO training configuration is paired seed by seed against the SRPO
/// configuration when exactly one SRPO configuration is present.
pub fn summarize(manifests: &[RunManifest]) -> Result<Summary> {
    let Some(first) = manifests.first() else {
        bail!("no manifests given");
    };
    for (i, m) in manifests.iter().enumerate().skip(1) {
        if m.env != first.env {
            bail!(
                "manifest {i} uses a different environment ({:?} with params {:?}) than manifest 0 ({:?} with params {:?}); summarize one environment at a time",
                m.env.kind,
                m.env.dynamics_params,
                first.env.kind,
                first.env.dynamics_params
            );
        }
    }
    if let Some(m) = manifests.iter().find(|m| !m.experiment.is_training()) {
        bail!("summarize only reads training runs, got a {} manifest", m.experiment);
    }

    let mut groups: BTreeMap<(Experiment, String), BTreeMap<u64, f64>> = BTreeMap::new();
    for m in manifests {
        let entry = groups.entry((m.experiment, m.config_hash.clone())).or_default();
        for (seed, r) in returns_by_seed(m) {
            if entry.insert(seed, r).is_some_and(|prev| prev != r) {
                bail!("seed {seed} of {} {} appears twice with different returns", m.experiment, m.config_hash);
            }
        }
    }

    let mut summary = Summary::default();
    for ((experiment, config_hash), by_seed) in &groups {
        if by_seed.is_empty() {
            continue;
        }
        let xs: Vec<f64> = by_seed.values().copied().collect();
        let (mean, std) = mean_std(&xs);
        summary.configs.push(ConfigSummary { experiment: *experiment, config_hash: config_hash.clone(), n_seeds: xs.len(), mean, std });
    }

    let srpo: Vec<_> = groups.iter().filter(|((e, _), _)| *e == Experiment::TrainSrpo).collect();
    if let [(_, srpo_runs)] = srpo.as_slice() {
        for ((experiment, _), runs) in groups.iter().filter(|((e, _), _)| *e != Experiment::TrainSrpo) {
            for (seed, other) in runs.iter() {
                if let Some(s) = srpo_runs.get(seed) {
                    summary.paired.push(PairedRow { comparison: *experiment, seed: *seed, srpo: *s, other: *other, difference: s - other });
                }
            }
        }
    }
    Ok(summary)
}
