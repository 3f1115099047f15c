//! Labelled random streams derived from one root seed.
//!
//! Every consumer of randomness asks for a stream by `(label, index)`. Streams
//! are ChaCha8 generators whose key is derived from the root seed and label and
//! whose stream id is the index, so adding a new consumer never shifts the
//! numbers seen by an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type used throughout the crate.
pub type StreamRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A node in the seed hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Derive an independent subtree.
    pub fn child(&self, label: &str, index: u64) -> SeedTree {
        SeedTree {
            root: splitmix64(splitmix64(self.root ^ fnv1a(label)) ^ splitmix64(index.wrapping_add(1))),
        }
    }

    /// Generator for `(label, index)`.
    pub fn rng(&self, label: &str, index: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.root ^ fnv1a(label)));
        rng.set_stream(index);
        rng
    }
}
