//! Shared key material of one link.
//!
//! Both servers of a pair hold the same seed and read key bytes at identical offsets,
//! standing in for the identical raw key the quantum channel delivers. Key IDs come from
//! a separate seeded stream indexed by allocation count so that they survive restarts.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use uuid::{Builder, Uuid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyStream {
    seed: u64,
}

impl KeyStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// `len` bytes starting at byte `offset` of the stream.
    pub fn bytes(&self, offset: u64, len: usize) -> Vec<u8> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_word_pos(u128::from(offset / 4));
        let skip = (offset % 4) as usize;
        let mut buf = vec![0u8; len + skip];
        rng.fill_bytes(&mut buf);
        buf.drain(..skip);
        buf
    }
}

/// Random (version 4) key IDs, reproducible from `seed` and the allocation index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdStream {
    seed: u64,
}

impl IdStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn nth(&self, index: u64) -> Uuid {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_word_pos(u128::from(index) * 4);
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        Builder::from_random_bytes(bytes).into_uuid()
    }
}
