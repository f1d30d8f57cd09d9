//! Reproducible, independently keyed random streams.
//!
//! A stream is a ChaCha8 generator whose key is derived from `(seed, purpose)`
//! and whose stream id (the 64-bit nonce) is the caller's index. Distinct
//! `(index, purpose)` pairs therefore never share keystream, and any stream can
//! be reconstructed without replaying the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// What a stream is used for; part of its key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Monte Carlo rollouts started from a queried state-action pair.
    QRollout,
    /// Rollouts from the initial distribution (objective / constraints).
    ConstraintRollout,
    Demand,
    Arrival,
    Service,
    Admission,
    /// Policy action draws inside simulators with separate noise streams.
    ActionChoice,
    /// State sampling for regression targets.
    StateSample,
    Custom(u32),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::QRollout => 1,
            Purpose::ConstraintRollout => 2,
            Purpose::Demand => 3,
            Purpose::Arrival => 4,
            Purpose::Service => 5,
            Purpose::Admission => 6,
            Purpose::ActionChoice => 7,
            Purpose::StateSample => 8,
            Purpose::Custom(x) => 0x1_0000_0000 | x as u64,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed, e.g. per iteration of an outer loop.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng_stream(seed: u64, index: u64, purpose: Purpose) -> Stream {
    let mut key = [0u8; 32];
    let mut state = mix64(seed) ^ mix64(purpose.tag().wrapping_add(0x5851_F42D_4C95_7F2D));
    for chunk in key.chunks_mut(8) {
        state = mix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
