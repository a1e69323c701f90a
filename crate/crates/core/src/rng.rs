//! Deterministic, splittable random streams.
//!
//! Every stream is keyed by `(master_seed, label, iteration, index)`. The key
//! is mixed with SplitMix64 into a ChaCha8 seed, so stream `n` of iteration
//! `t` draws the same numbers no matter which worker runs it or in what order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Purpose tag separating otherwise identical `(iteration, index)` keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamLabel {
    InitialDesign,
    Candidates,
    Batch,
    Scenario,
    Evaluation,
    Trajectory,
    Custom(u64),
}

impl StreamLabel {
    fn tag(self) -> u64 {
        match self {
            StreamLabel::InitialDesign => 0x01,
            StreamLabel::Candidates => 0x02,
            StreamLabel::Batch => 0x03,
            StreamLabel::Scenario => 0x04,
            StreamLabel::Evaluation => 0x05,
            StreamLabel::Trajectory => 0x06,
            StreamLabel::Custom(v) => 0x100 ^ v.rotate_left(17),
        }
    }
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A reproducible random stream derived from a master seed.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn derive(master_seed: u64, label: StreamLabel, iteration: u64, index: u64) -> Self {
        let mut state = master_seed;
        // Absorb each key word through a full mixing round.
        for word in [label.tag(), iteration, index] {
            state = splitmix64(&mut state) ^ word;
        }
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self {
            inner: ChaCha8Rng::from_seed(seed),
        }
    }

    /// Convenience for tests and one-off streams.
    pub fn from_seed(seed: u64) -> Self {
        Self::derive(seed, StreamLabel::Custom(0), 0, 0)
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    #[inline]
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
