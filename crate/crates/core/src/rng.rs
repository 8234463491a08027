//! Named, splittable random streams.
//!
//! A [`StreamKey`] is a 256-bit ChaCha key. Keys are derived from a 64-bit
//! seed and a path of names and indices by hashing, and every key exposes
//! 2^64 independent ChaCha streams. ChaCha is counter based, so two keys (or
//! two stream ids of one key) never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct StreamKey([u8; 32]);

impl std::fmt::Debug for StreamKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "StreamKey({:02x}{:02x}{:02x}{:02x}..)", self.0[0], self.0[1], self.0[2], self.0[3])
    }
}

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        let digest = Sha256::new()
            .chain_update(b"swflow/root")
            .chain_update(seed.to_le_bytes())
            .finalize();
        StreamKey(digest.into())
    }

    pub fn named(&self, name: &str) -> Self {
        let digest = Sha256::new()
            .chain_update(self.0)
            .chain_update(b"/name/")
            .chain_update(name.as_bytes())
            .finalize();
        StreamKey(digest.into())
    }

    pub fn child(&self, index: u64) -> Self {
        let digest = Sha256::new()
            .chain_update(self.0)
            .chain_update(b"/index/")
            .chain_update(index.to_le_bytes())
            .finalize();
        StreamKey(digest.into())
    }

    /// Stream 0 of this key.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.0)
    }

    pub fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.0);
        rng.set_stream(id);
        rng
    }
}

/// Shorthand for `StreamKey::root(seed).named(name)`.
pub fn substream(seed: u64, name: &str) -> StreamKey {
    StreamKey::root(seed).named(name)
}
