use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::rng;
use crate::solvers::{self, OccupancyVector, PolicyTable};
use crate::theory::{occupancy_kl, smooth};

/// Tail mass below which rollouts are truncated.
const ROLLOUT_TAIL: f64 = 1e-10;

/// Both sides of the occupancy KL rewrite as an expected discounted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlIdentity {
    /// `D_KL(d_π ‖ ζ)` computed from the exact occupancy.
    pub direct_kl: f64,
    /// Monte Carlo mean of `−(1−γ) Σ_t γ^t (log ζ(s_t) − log d_π(s_t))`.
    pub rollout_estimate: f64,
    pub std_error: f64,
    pub n_rollouts: usize,
    pub horizon: usize,
}

impl KlIdentity {
    /// Gap between the two sides in standard errors.
    pub fn z_score(&self) -> f64 {
        let gap = (self.rollout_estimate - self.direct_kl).abs();
        if self.std_error == 0.0 {
            if gap == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            gap / self.std_error
        }
    }
}

/// Check `D_KL(d_π‖ζ) = −(1−γ) E_τ Σ_t γ^t (log ζ(s_t) − log d_π(s_t))` by rollouts.
///
/// Both distributions are smoothed (`+1e-8`, renormalized) before taking logs.
pub fn kl_identity_check(
    m: &TabularMdp,
    pi: &PolicyTable,
    zeta: &OccupancyVector,
    n_rollouts: usize,
    rng_seed: u64,
) -> Result<KlIdentity> {
    if n_rollouts < 2 {
        return Err(Error::InvalidArgument("need at least two rollouts".into()));
    }
    if zeta.d.len() != m.n_states() {
        return Err(Error::Domain("reference distribution has the wrong length".into()));
    }
    let d_pi = solvers::occupancy(m, pi)?;
    let d = smooth(&d_pi.d);
    let z = smooth(&zeta.d);
    if d.iter().chain(&z).any(|x| !(*x > 0.0)) {
        return Err(Error::Domain("support mismatch survives smoothing".into()));
    }
    let direct_kl = occupancy_kl(&d_pi, zeta)?;

    let g = m.gamma();
    let horizon = (ROLLOUT_TAIL.ln() / g.ln()).ceil() as usize;
    let log_gap: Vec<f64> = z.iter().zip(&d).map(|(zs, ds)| zs.ln() - ds.ln()).collect();
    let mut rng = rng::stream(rng_seed, "kl_identity");
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n_rollouts {
        let mut s = solvers::sample_categorical(m.rho0(), &mut rng);
        let mut disc = 1.0;
        let mut acc = 0.0;
        for _ in 0..horizon {
            acc += disc * log_gap[s];
            let a = pi.sample(s, &mut rng);
            s = solvers::sample_next(m, s, a, &mut rng).0;
            disc *= g;
        }
        let x = -(1.0 - g) * acc;
        sum += x;
        sum_sq += x * x;
    }
    let n = n_rollouts as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(KlIdentity { direct_kl, rollout_estimate: mean, std_error: (var / n).sqrt(), n_rollouts, horizon })
}
