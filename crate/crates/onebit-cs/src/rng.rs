//! Deterministic seeded random-number streams.
//!
//! A stream is identified by `(master_seed, stream_id)`. Child streams are
//! derived from those identifiers alone — never from consumed generator
//! state — so restarts and Monte-Carlo trials can fan out in parallel and
//! still reproduce the serial run exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// One step of the splitmix64 sequence; spreads seed material so that nearby
/// `(master_seed, stream_id)` pairs produce unrelated generator states.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a parent stream id with a child index into a new stream id.
fn mix_child_id(parent: u64, index: u64) -> u64 {
    let mut state = parent ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let first = splitmix64(&mut state);
    let mut state = first ^ parent.rotate_left(32) ^ 0x632B_E59B_D9B4_E019;
    splitmix64(&mut state)
}

/// Reproducible random stream backed by ChaCha12.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    /// Root stream for a master seed (stream id 0).
    pub fn new(master_seed: u64) -> Self {
        Self::with_id(master_seed, 0)
    }

    fn with_id(master_seed: u64, stream_id: u64) -> Self {
        let mut state = master_seed ^ stream_id.wrapping_mul(0xA076_1D64_78BD_642F);
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        RngStream {
            master_seed,
            stream_id,
            rng: ChaCha12Rng::from_seed(seed),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Deterministic child stream. Children with distinct indices are
    /// distinct, and derivation ignores how much of the parent has been
    /// consumed.
    pub fn derive(&self, index: u64) -> RngStream {
        RngStream::with_id(self.master_seed, mix_child_id(self.stream_id, index))
    }

    /// One draw from N(0, 1).
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// `count` i.i.d. draws from N(mean, variance).
    pub fn sample_gaussian(&mut self, count: usize, mean: f64, variance: f64) -> Result<Vec<f64>> {
        if !mean.is_finite() || !variance.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gaussian parameters must be finite, got mean {mean}, variance {variance}"
            )));
        }
        if variance < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "gaussian variance must be nonnegative, got {variance}"
            )));
        }
        let sd = variance.sqrt();
        Ok((0..count).map(|_| mean + sd * self.standard_normal()).collect())
    }

    /// One draw uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// One draw uniform on {0, 1, ..., bound-1}.
    pub fn index(&mut self, bound: usize) -> usize {
        self.rng.random_range(0..bound)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.rng.random_range(0..=i);
            items.swap(i, j);
        }
    }
}
