//! Seed derivation.
//!
//! Every random stream is keyed by `(seed, purpose)` through SHA-256, so
//! independent consumers never share a generator and adding a new consumer
//! never perturbs an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Derive a 32-byte key from a seed and a purpose label.
pub fn derive_key(seed: u64, purpose: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((purpose.len() as u64).to_le_bytes());
    hasher.update(purpose.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    key
}

/// A generator owned by one consumer.
pub fn stream(seed: u64, purpose: &str) -> StreamRng {
    ChaCha8Rng::from_seed(derive_key(seed, purpose))
}

/// Derive a child seed, e.g. one per family member or per repetition.
pub fn child_seed(seed: u64, purpose: &str, index: u64) -> u64 {
    let key = derive_key(seed ^ index.rotate_left(32), &format!("{purpose}#{index}"));
    u64::from_le_bytes(key[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_separated() {
        let a: Vec<u64> = stream(7, "rollout").sample_iter(rand::distributions::Standard).take(4).collect();
        let b: Vec<u64> = stream(7, "rollout").sample_iter(rand::distributions::Standard).take(4).collect();
        let c: Vec<u64> = stream(7, "discriminator").sample_iter(rand::distributions::Standard).take(4).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(child_seed(1, "pair", 0), child_seed(1, "pair", 1));
        let _ = stream(0, "").gen::<f64>();
    }
}
