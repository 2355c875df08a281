//! Named, splittable random streams.
//!
//! Every random draw in the crate comes from a [`SeedStream`]. A stream is a
//! 256-bit key derived by hashing its parent key with a name or an index, so
//! the numbers a replicate sees depend only on the root seed and its path,
//! never on which worker thread produced them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedStream {
    key: [u8; 32],
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        let key = Sha256::new()
            .chain_update(b"lkc/root")
            .chain_update(seed.to_le_bytes())
            .finalize()
            .into();
        SeedStream { key }
    }

    /// Sub-stream identified by `name`.
    pub fn child(&self, name: &str) -> Self {
        let key = Sha256::new()
            .chain_update(self.key)
            .chain_update(b"/")
            .chain_update(name.as_bytes())
            .finalize()
            .into();
        SeedStream { key }
    }

    /// Sub-stream identified by an integer, e.g. a replicate number.
    pub fn index(&self, i: u64) -> Self {
        let key = Sha256::new()
            .chain_update(self.key)
            .chain_update(b"#")
            .chain_update(i.to_le_bytes())
            .finalize()
            .into();
        SeedStream { key }
    }

    /// Generator for counter stream `i` under this key.
    pub fn rng(&self, i: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(i);
        rng
    }
}
