//! Seed derivation and random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] seeded through a
//! [`SeedTree`]. A tree node is a 64-bit seed; children are derived with a
//! SplitMix64-style finalizer keyed by an index, so sibling streams are
//! independent of each other and of the order in which they are consumed.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// The generator used for every stream.
pub type StreamRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A node in the deterministic seed hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedTree(u64);

impl SeedTree {
    pub const fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub const fn seed(self) -> u64 {
        self.0
    }

    /// Derives the stream for `index` under this node.
    pub fn child(self, index: u64) -> Self {
        let keyed = self.0.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1)));
        Self(mix64(mix64(keyed) ^ self.0.rotate_left(17)))
    }

    /// Derives a child keyed by arbitrary bytes (FNV-1a folded through [`child`](Self::child)).
    pub fn child_bytes(self, bytes: &[u8]) -> Self {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.child(h)
    }

    pub fn rng(self) -> StreamRng {
        StreamRng::seed_from_u64(self.0)
    }
}

/// Source of standard normal variates.
pub trait GaussianSource {
    fn next_gaussian(&mut self) -> f64;
}

impl<R: RngCore> GaussianSource for R {
    fn next_gaussian(&mut self) -> f64 {
        self.sample(StandardNormal)
    }
}

/// A source that always yields zero; suppresses noise injection in tests and ablations.
#[derive(Debug, Default, Clone, Copy)]
pub struct ZeroNoise;

impl GaussianSource for ZeroNoise {
    fn next_gaussian(&mut self) -> f64 {
        0.0
    }
}
