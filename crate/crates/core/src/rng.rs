//! Deterministic random-stream tree.
//!
//! Every random draw in the crate comes from a [`Stream`] addressed by a path
//! of integers below the master seed (replicate, imputation round, subject,
//! purpose, ...). Two draws with the same path see the same numbers no matter
//! which thread runs them or in which order the paths are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator type handed out by [`Stream::rng`].
pub type StreamRng = ChaCha8Rng;

/// Domain tags for the first level below the master seed.
pub mod tag {
    pub const TRIAL: u64 = 0x7472_6961;
    pub const TRUTH: u64 = 0x7472_7574;
    pub const IMPUTE: u64 = 0x696d_7075;
    pub const SUBJECT: u64 = 0x7375_626a;
    pub const MODEL: u64 = 0x6d6f_6465;
    pub const GATE: u64 = 0x6761_7465;
    pub const ROUND: u64 = 0x726f_756e;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A node in the stream tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stream(u64);

impl Stream {
    pub fn root(master_seed: u64) -> Self {
        Stream(splitmix64(master_seed ^ 0x5244_4d49_5f52_4f4f))
    }

    /// Child node `index`; distinct indices give unrelated keys.
    #[inline]
    pub fn child(self, index: u64) -> Self {
        Stream(splitmix64(
            self.0 ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)),
        ))
    }

    pub fn path(self, indices: &[u64]) -> Self {
        indices.iter().fold(self, |s, &i| s.child(i))
    }

    pub fn key(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> StreamRng {
        let mut seed = [0u8; 32];
        let mut z = self.0;
        for chunk in seed.chunks_exact_mut(8) {
            z = splitmix64(z);
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_path_same_numbers() {
        let a: f64 = Stream::root(7).path(&[1, 2, 3]).rng().random();
        let b: f64 = Stream::root(7).child(1).child(2).child(3).rng().random();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn sibling_paths_differ() {
        let r = Stream::root(7);
        assert_ne!(r.child(0).key(), r.child(1).key());
        assert_ne!(r.path(&[0, 1]).key(), r.path(&[1, 0]).key());
        assert_ne!(Stream::root(1).key(), Stream::root(2).key());
    }
}
