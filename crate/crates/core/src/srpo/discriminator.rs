//! Logistic discriminator between high-score and low-score samples.
//!
//! At the cross-entropy optimum `D(x) = p_real(x) / (p_real(x) + p_fake(x))`,
//! so the odds `D / (1 − D)` estimate the density ratio used for reward augmentation.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SrpoConfig;
use crate::error::{Error, Result};
use crate::rng;

/// Discriminator output clamp.
pub const OUTPUT_CLAMP: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// Maps a sample key (state index, or `s * n_actions + a`) to a feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    OneHot { n_keys: usize },
    Coords { coords: Vec<Vec<f64>> },
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        match self {
            FeatureMap::OneHot { n_keys } => *n_keys,
            FeatureMap::Coords { coords } => coords.first().map_or(0, Vec::len),
        }
    }

    pub fn n_keys(&self) -> usize {
        match self {
            FeatureMap::OneHot { n_keys } => *n_keys,
            FeatureMap::Coords { coords } => coords.len(),
        }
    }

    fn logit(&self, weights: &[f64], bias: f64, key: usize) -> f64 {
        match self {
            FeatureMap::OneHot { .. } => weights[key] + bias,
            FeatureMap::Coords { coords } => coords[key].iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() + bias,
        }
    }

    /// Accumulate `g · φ(key)` into `grad`.
    fn add_scaled(&self, grad: &mut [f64], key: usize, g: f64) {
        match self {
            FeatureMap::OneHot { .. } => grad[key] += g,
            FeatureMap::Coords { coords } => {
                for (gi, x) in grad.iter_mut().zip(&coords[key]) {
                    *gi += g * x;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_map: FeatureMap,
    /// Mean cross-entropy after each epoch.
    pub loss_history: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl Discriminator {
    /// `D(key)` clamped to `[1e-4, 1 − 1e-4]`.
    pub fn output(&self, key: usize) -> f64 {
        sigmoid(self.feature_map.logit(&self.weights, self.bias, key)).clamp(OUTPUT_CLAMP, 1.0 - OUTPUT_CLAMP)
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// Per-key counts of real and fake samples.
struct Counts {
    keys: Vec<usize>,
    real: Vec<f64>,
    fake: Vec<f64>,
    total: f64,
}

impl Counts {
    fn new(real: &[usize], fake: &[usize]) -> Self {
        let mut map: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        for &k in real {
            map.entry(k).or_default().0 += 1.0;
        }
        for &k in fake {
            map.entry(k).or_default().1 += 1.0;
        }
        let keys = map.keys().copied().collect();
        let total = map.values().map(|(r, f)| r + f).sum();
        let (real, fake) = map.values().copied().unzip();
        Self { keys, real, fake, total }
    }
}

fn loss(fm: &FeatureMap, w: &[f64], b: f64, c: &Counts) -> f64 {
    let mut acc = 0.0;
    for (i, &k) in c.keys.iter().enumerate() {
        let z = fm.logit(w, b, k);
        acc += c.real[i] * softplus(-z) + c.fake[i] * softplus(z);
    }
    acc / c.total
}

fn gradient(fm: &FeatureMap, w: &[f64], b: f64, c: &Counts) -> (Vec<f64>, f64) {
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (i, &k) in c.keys.iter().enumerate() {
        let p = sigmoid(fm.logit(w, b, k));
        let g = (c.real[i] * (p - 1.0) + c.fake[i] * p) / c.total;
        fm.add_scaled(&mut gw, k, g);
        gb += g;
    }
    (gw, gb)
}

/// Fit a logistic discriminator by full-batch gradient descent on binary cross-entropy.
///
/// A step that would raise the loss is retried with half the learning rate,
/// so the recorded loss never increases. The seed only drives a small weight
/// initialization.
pub fn train_discriminator(
    d_real: &[usize],
    d_fake: &[usize],
    feature_map: FeatureMap,
    cfg: &SrpoConfig,
    rng_seed: u64,
) -> Result<Discriminator> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::InsufficientData("discriminator needs non-empty real and fake sets".into()));
    }
    let n_keys = feature_map.n_keys();
    if let Some(&k) = d_real.iter().chain(d_fake).find(|&&k| k >= n_keys) {
        return Err(Error::InvalidArgument(format!("sample key {k} outside feature map of {n_keys} keys")));
    }
    let counts = Counts::new(d_real, d_fake);
    let mut init = rng::stream(rng_seed, "discriminator/init");
    let mut w: Vec<f64> = (0..feature_map.dim()).map(|_| 1e-3 * (init.gen::<f64>() - 0.5)).collect();
    let mut b = 0.0;
    let mut lr = cfg.disc_lr;
    let mut current = loss(&feature_map, &w, b, &counts);
    let mut history = Vec::with_capacity(cfg.disc_epochs);

    for _ in 0..cfg.disc_epochs {
        let (gw, gb) = gradient(&feature_map, &w, b, &counts);
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let w_new: Vec<f64> = w.iter().zip(&gw).map(|(x, g)| x - lr * g).collect();
            let b_new = b - lr * gb;
            let candidate = loss(&feature_map, &w_new, b_new, &counts);
            if candidate.is_nan() {
                return Err(Error::Numerical("discriminator loss is NaN".into()));
            }
            if candidate <= current {
                w = w_new;
                b = b_new;
                current = candidate;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        history.push(current);
        if !accepted {
            break;
        }
    }
    if !current.is_finite() {
        return Err(Error::Numerical("discriminator loss diverged".into()));
    }
    Ok(Discriminator { weights: w, bias: b, feature_map, loss_history: history })
}

/// `D / (1 − D)` clamped to `clip`.
pub fn density_ratio(disc: &Discriminator, key: usize, clip: (f64, f64)) -> f64 {
    let d = disc.output(key);
    (d / (1.0 - d)).clamp(clip.0, clip.1)
}

/// `r + λ · ln(D / (1 − D))` with the ratio clipped.
pub fn augment_reward(r: f64, disc: &Discriminator, key: usize, lambda: f64, clip: (f64, f64)) -> f64 {
    r + lambda * density_ratio(disc, key, clip).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(bias: f64) -> Discriminator {
        Discriminator { weights: vec![0.0], bias, feature_map: FeatureMap::OneHot { n_keys: 1 }, loss_history: vec![] }
    }

    #[test]
    fn ratio_identities() {
        let clip = (0.05, 20.0);
        assert!((density_ratio(&fixed(0.0), 0, clip) - 1.0).abs() < 1e-15);
        let logit_08 = (0.8f64 / 0.2).ln();
        assert!((density_ratio(&fixed(logit_08), 0, clip) - 4.0).abs() < 1e-12);
        assert_eq!(density_ratio(&fixed(50.0), 0, (0.05, 100.0)), 100.0);
    }

    #[test]
    fn augmentation_arithmetic() {
        let clip = (0.05, 20.0);
        let logit_08 = (0.8f64 / 0.2).ln();
        assert_eq!(augment_reward(1.5, &fixed(3.0), 0, 0.0, clip), 1.5);
        assert_eq!(augment_reward(1.5, &fixed(0.0), 0, 0.3, clip), 1.5);
        let r = augment_reward(1.0, &fixed(logit_08), 0, 0.3, clip);
        assert!((r - 1.415_888_308_335_967).abs() < 1e-12, "{r}");
    }

    #[test]
    fn symmetric_sets_give_half() {
        let cfg = SrpoConfig { disc_epochs: 300, ..SrpoConfig::default() };
        let set = [0, 1, 1, 2, 3, 3, 3];
        let d = train_discriminator(&set, &set, FeatureMap::OneHot { n_keys: 4 }, &cfg, 1).unwrap();
        for s in 0..4 {
            assert!((d.output(s) - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn separable_sets_saturate() {
        let cfg = SrpoConfig { disc_epochs: 2000, ..SrpoConfig::default() };
        let d = train_discriminator(&[0, 0, 1], &[2, 3, 3], FeatureMap::OneHot { n_keys: 4 }, &cfg, 0).unwrap();
        assert!(d.output(0) > 0.95 && d.output(1) > 0.95);
        assert!(d.output(2) < 0.05 && d.output(3) < 0.05);
        assert!(d.loss_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        let cfg = SrpoConfig::default();
        assert!(train_discriminator(&[], &[1], FeatureMap::OneHot { n_keys: 2 }, &cfg, 0).is_err());
        assert!(train_discriminator(&[5], &[1], FeatureMap::OneHot { n_keys: 2 }, &cfg, 0).is_err());
    }
}
