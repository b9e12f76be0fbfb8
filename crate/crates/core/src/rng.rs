//! Named, independently reproducible random substreams derived from a
//! single run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Substream names used across the crate.
pub mod stream {
    pub const PARTITION: &str = "partition";
    pub const ORACLE: &str = "oracle-noise";
    pub const EXEMPLAR_TIES: &str = "exemplar-ties";
    pub const K_SWEEP: &str = "k-sweep";
    pub const PERMUTATION: &str = "permutation";
    pub const SYNTHETIC: &str = "synthetic";
}

/// Derives a 64-bit seed from `(seed, stream, key...)`.
///
/// The derivation is a hash, so substreams never share state and adding a
/// new stream cannot perturb existing ones.
pub fn derive_seed(seed: u64, stream: &str, keys: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(stream.as_bytes());
    for key in keys {
        hasher.update([0u8]);
        hasher.update(key.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn substream(seed: u64, stream: &str, keys: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, keys))
}
