//! Seeded, order-independent random streams.
//!
//! Every replicate draws from `stream(master_seed, replicate)`: a ChaCha8
//! generator keyed by the master seed and positioned on its own 64-bit stream
//! id. No state is shared between replicates, so results do not depend on the
//! order or thread in which replicates run.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Recorded in every Monte Carlo report so a run can be replayed.
pub const GENERATOR_VERSION: &str = "rand_chacha-0.9/ChaCha8Rng/splitmix64-key/stream-per-replicate/v1";

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = master_seed;
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Rademacher signs drawn one bit at a time from a 64-bit word stream.
pub struct SignSource<R> {
    rng: R,
    word: u64,
    left: u32,
}

impl<R: RngCore> SignSource<R> {
    pub fn new(rng: R) -> Self {
        SignSource { rng, word: 0, left: 0 }
    }

    #[inline]
    pub fn next_bit(&mut self) -> bool {
        if self.left == 0 {
            self.word = self.rng.next_u64();
            self.left = 64;
        }
        let bit = self.word & 1 == 1;
        self.word >>= 1;
        self.left -= 1;
        bit
    }

    /// +1 or -1 with equal probability.
    #[inline]
    pub fn next_sign(&mut self) -> i8 {
        if self.next_bit() {
            1
        } else {
            -1
        }
    }
}
