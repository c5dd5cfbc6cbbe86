//! Deterministic random streams.
//!
//! Every random draw in the toolkit comes from a ChaCha8 stream selected by
//! `(master_seed, purpose, run, index)`:
//!
//! * the 256-bit ChaCha key is four consecutive SplitMix64 outputs seeded with
//!   `master_seed`;
//! * the 64-bit stream id is a SplitMix64 fold over `[purpose tag, run, index]`;
//! * the block counter starts at zero.
//!
//! ChaCha is counter-based, so a stream's output depends only on these values.
//! Streams for different purposes never overlap, and results do not depend on
//! the order in which streams are created or on thread count.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Stream = ChaCha8Rng;

/// What a stream is used for. The discriminant is part of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Sampler = 1,
    ModelInit = 2,
    Subsample = 3,
    TrainData = 4,
    TestData = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        SeedSpec { master_seed }
    }

    pub fn stream(&self, purpose: Purpose, run: u64, index: u64) -> Stream {
        let mut key_state = self.master_seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64_next(&mut key_state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream_id(purpose, run, index));
        rng
    }
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec::new(20_211_031)
    }
}

fn splitmix64_next(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    splitmix64_mix(*state)
}

fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 fold of `[purpose, run, index]`.
pub fn stream_id(purpose: Purpose, run: u64, index: u64) -> u64 {
    [purpose as u64, run, index]
        .into_iter()
        .fold(0u64, |acc, word| {
            splitmix64_mix(acc.wrapping_add(0x9E37_79B9_7F4A_7C15) ^ splitmix64_mix(word))
        })
}

/// Uniform draw on the open interval `(0, 1)`: the top 52 bits of a `u64`
/// shifted to the midpoint of their cell, `(k + 0.5) / 2^52`.
pub fn open_unit(rng: &mut impl RngCore) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 52) as f64;
    ((rng.next_u64() >> 12) as f64 + 0.5) * SCALE
}
