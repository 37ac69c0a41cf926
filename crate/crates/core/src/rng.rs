//! Counter-based random streams.
//!
//! Every Monte Carlo draw in the crate comes from a [`StreamKey`], a 64-bit
//! key derived by hashing a path of labels (master seed, level, state index,
//! epoch, grid coordinates, ...). Two streams with different paths are
//! statistically independent, and the stream for a given path never depends
//! on scheduling or on how many workers are running.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type behind every stream.
pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A node in the tree of random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey(splitmix(seed ^ 0x5EED_0000_0000_0001))
    }

    /// Derive the child stream for `label`.
    #[inline]
    pub fn child(self, label: u64) -> Self {
        StreamKey(splitmix(self.0.rotate_left(17) ^ splitmix(label)))
    }

    /// Derive a child keyed by the exact bit patterns of a coordinate vector.
    ///
    /// Keying by value (rather than by position in a list) makes the stream of
    /// a grid point independent of the order in which the grid is listed.
    pub fn child_coords(self, coords: &[f64]) -> Self {
        let mut key = self.child(0xC00D_0000 ^ coords.len() as u64);
        for c in coords {
            // +0.0 and -0.0 name the same control.
            let bits = if *c == 0.0 { 0 } else { c.to_bits() };
            key = key.child(bits);
        }
        key
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> StreamRng {
        let mut seed = [0u8; 32];
        let mut z = self.0;
        for chunk in seed.chunks_exact_mut(8) {
            z = splitmix(z);
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

/// Well-known first-level labels so unrelated consumers of one master seed
/// never share a stream.
pub mod label {
    pub const CLOUD: u64 = 1;
    pub const ENRICH: u64 = 2;
    pub const VALUE_ITERATION: u64 = 3;
    pub const VALUE_FIT: u64 = 4;
    pub const EPOCH: u64 = 5;
    pub const TRAINER: u64 = 6;
    pub const BOUND: u64 = 7;
}
