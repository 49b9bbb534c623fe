//! Deterministic seed derivation.
//!
//! Every random stream in the pipeline is derived from the master seed with
//! the stable mixing functions below (never `std::hash`, whose output may
//! change between releases). Per-protein streams are keyed by protein id, so
//! scheduling order and worker count cannot affect results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes, mixed into derived seeds so the same protein id yields
/// unrelated streams for fitting, null sampling, and data generation.
#[derive(Debug, Clone, Copy)]
pub enum Purpose {
    Fit,
    NullSampling,
    Synth,
    SynthColumns,
}

impl Purpose {
    pub(crate) fn tag(self) -> u64 {
        match self {
            Purpose::Fit => 0x5449_465f,
            Purpose::NullSampling => 0x4c4c_554e,
            Purpose::Synth => 0x484e_5953,
            Purpose::SynthColumns => 0x4c4f_4353,
        }
    }
}

/// SplitMix64 finalizer; the standard 64-bit mixer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mix a word into a running seed.
pub fn mix(seed: u64, word: u64) -> u64 {
    splitmix64(seed ^ splitmix64(word))
}

/// Mix a byte string (e.g. a protein id) into a running seed.
pub fn mix_str(seed: u64, s: &str) -> u64 {
    let mut h = splitmix64(seed ^ 0x7f4a_7c15_9e37_79b9);
    for chunk in s.as_bytes().chunks(8) {
        let mut w = [0u8; 8];
        w[..chunk.len()].copy_from_slice(chunk);
        h = mix(h, u64::from_le_bytes(w));
    }
    mix(h, s.len() as u64)
}

/// Fold an f64 slice into a digest. Used to key fit restarts off the design
/// itself, which makes fits label-agnostic: identical data gives identical
/// restarts no matter which condition it came from.
pub fn digest_f64s(seed: u64, values: &[f64]) -> u64 {
    let mut h = seed;
    for v in values {
        h = mix(h, v.to_bits());
    }
    mix(h, values.len() as u64)
}

/// Seed for a per-protein stream.
pub fn protein_seed(master: u64, protein_id: &str, purpose: Purpose) -> u64 {
    mix(mix_str(master, protein_id), purpose.tag())
}

/// Deterministic RNG from a derived seed.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
