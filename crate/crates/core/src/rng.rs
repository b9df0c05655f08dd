//! Named random streams derived from a single base seed.
//!
//! Every consumer of randomness asks for a stream by [`StreamKey`]. The key is
//! hashed together with the base seed (SplitMix64 finalizer) into a ChaCha8
//! seed, so a stream's contents depend only on `(base_seed, key)` and never on
//! how many draws other streams have made.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamKey {
    /// Synchronized across all nodes at step `t` (sketch vectors, random
    /// projectors).
    Shared { step: u64 },
    /// Gradient noise for one node at one step. Node ids start at 1.
    Noise { node: u64, step: u64 },
    /// Per-node stochastic compressor draws (rand-k).
    Sparsifier { node: u64, step: u64 },
    /// Problem construction (centers, datasets, initial point).
    Problem { tag: u64 },
    /// Free-form stream for tests and Monte-Carlo checks.
    Trial { id: u64 },
}

impl StreamKey {
    fn words(&self) -> [u64; 3] {
        match *self {
            StreamKey::Shared { step } => [1, step, 0],
            StreamKey::Noise { node, step } => [2, node, step],
            StreamKey::Sparsifier { node, step } => [3, node, step],
            StreamKey::Problem { tag } => [4, tag, 0],
            StreamKey::Trial { id } => [5, id, 0],
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn derive(base_seed: u64, key: StreamKey) -> Self {
        let mut state = splitmix64(base_seed);
        for w in key.words() {
            state = splitmix64(state ^ w);
        }
        let mut seed = [0u8; 32];
        for (i, chunk) in seed.chunks_mut(8).enumerate() {
            state = splitmix64(state.wrapping_add(i as u64));
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        Self {
            inner: ChaCha8Rng::from_seed(seed),
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.standard_normal()).collect()
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_vec(rows, cols, self.normal_vec(rows * cols))
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_stream() {
        let a = RngStream::derive(42, StreamKey::Shared { step: 3 }).normal_vec(8);
        let b = RngStream::derive(42, StreamKey::Shared { step: 3 }).normal_vec(8);
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_keys_differ() {
        let keys = [
            StreamKey::Shared { step: 1 },
            StreamKey::Shared { step: 2 },
            StreamKey::Noise { node: 1, step: 1 },
            StreamKey::Noise { node: 2, step: 1 },
            StreamKey::Noise { node: 1, step: 2 },
            StreamKey::Sparsifier { node: 1, step: 1 },
            StreamKey::Problem { tag: 1 },
            StreamKey::Trial { id: 1 },
        ];
        let firsts: Vec<u64> = keys
            .iter()
            .map(|k| RngStream::derive(7, *k).next_u64())
            .collect();
        for i in 0..firsts.len() {
            for j in (i + 1)..firsts.len() {
                assert_ne!(firsts[i], firsts[j], "{:?} vs {:?}", keys[i], keys[j]);
            }
        }
        assert_ne!(
            RngStream::derive(7, keys[0]).next_u64(),
            RngStream::derive(8, keys[0]).next_u64()
        );
    }
}
