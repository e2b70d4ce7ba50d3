//! Counter-based uniform draws keyed by `(seed, record_id, entry_id)`.
//!
//! Each draw is a pure function of its key, so sampling decisions do not
//! depend on shard order, worker count or how many draws came before.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const WORDS_PER_DRAW: u128 = 2;

#[derive(Debug, Clone)]
pub struct DrawStream {
    base: ChaCha8Rng,
}

impl DrawStream {
    pub fn new(seed: u64) -> Self {
        Self {
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// All draws for one record share a ChaCha stream selected by the
    /// record id hash; the entry id is the counter.
    pub fn for_record(&self, record_id: &str) -> RecordDraws {
        let digest = Sha256::digest(record_id.as_bytes());
        let stream = u64::from_le_bytes(digest[..8].try_into().unwrap());
        let mut rng = self.base.clone();
        rng.set_stream(stream);
        RecordDraws { rng }
    }

    pub fn draw(&self, record_id: &str, entry_id: u32) -> f64 {
        self.for_record(record_id).draw(entry_id)
    }
}

pub struct RecordDraws {
    rng: ChaCha8Rng,
}

impl RecordDraws {
    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn draw(&mut self, entry_id: u32) -> f64 {
        self.rng.set_word_pos(entry_id as u128 * WORDS_PER_DRAW);
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
