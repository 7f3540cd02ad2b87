use serde::{Deserialize, Serialize};

use super::Transition;
use crate::error::{Error, Result};

/// What ranks transitions in a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionScore {
    /// Immediate reward of the transition.
    #[default]
    Reward,
    /// The cached `value_score`.
    Value,
}

/// Batch indices of the high-scoring (`real`) and low-scoring (`fake`) halves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub real: Vec<usize>,
    pub fake: Vec<usize>,
}

impl Partition {
    pub fn real_states(&self, batch: &[Transition]) -> Vec<usize> {
        self.real.iter().map(|&i| batch[i].s).collect()
    }

    pub fn fake_states(&self, batch: &[Transition]) -> Vec<usize> {
        self.fake.iter().map(|&i| batch[i].s).collect()
    }
}

/// Number of transitions on each side: `⌈ρ·n⌉`, capped at `⌊n/2⌋` so the sides stay disjoint.
pub fn partition_size(n: usize, rho: f64) -> usize {
    ((rho * n as f64).ceil() as usize).min(n / 2).max(1)
}

/// Split a batch into its top and bottom `⌈ρ·n⌉` transitions by score.
///
/// Ranking is by descending score, with equal scores kept in batch (insertion)
/// order, so older transitions are preferred for `real` and newer ones end up in `fake`.
pub fn partition_batch(batch: &[Transition], rho: f64, score: PartitionScore) -> Result<Partition> {
    if batch.len() < 2 {
        return Err(Error::InsufficientData(format!("batch of {} transitions cannot be partitioned", batch.len())));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!("rho must lie in (0,1), got {rho}")));
    }
    let scores = batch
        .iter()
        .map(|t| match score {
            PartitionScore::Reward => Ok(t.r),
            PartitionScore::Value => t
                .value_score
                .ok_or_else(|| Error::InvalidArgument("value-scored partition needs value_score on every transition".into())),
        })
        .collect::<Result<Vec<f64>>>()?;
    if scores.iter().any(|x| x.is_nan()) {
        return Err(Error::Numerical("NaN partition score".into()));
    }
    let mut order: Vec<usize> = (0..batch.len()).collect();
    // NaN is excluded above; `partial_cmp` also keeps -0.0 and 0.0 tied.
    order.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap_or(std::cmp::Ordering::Equal));
    let k = partition_size(batch.len(), rho);
    Ok(Partition { real: order[..k].to_vec(), fake: order[order.len() - k..].to_vec() })
}
