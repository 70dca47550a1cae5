//! Named random streams derived from one root seed.
//!
//! Every stochastic component draws from its own stream (`env`, `noise`,
//! `init`, `data`, ...) so that perturbing one never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    root: u64,
}

impl SeedStreams {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Stream for `name`; the same (root, name) pair always yields the same sequence.
    pub fn stream(&self, name: &str) -> StreamRng {
        ChaCha8Rng::seed_from_u64(mix(self.root, name, 0))
    }

    /// Sub-stream, e.g. one per evaluation day.
    pub fn indexed(&self, name: &str, index: u64) -> StreamRng {
        ChaCha8Rng::seed_from_u64(mix(self.root, name, index.wrapping_add(1)))
    }
}

fn mix(root: u64, name: &str, index: u64) -> u64 {
    // FNV-1a over the name, then a splitmix64 finaliser.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(root ^ splitmix(h ^ splitmix(index)))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
