//! Labelled random sub-streams derived from a single master seed.
//!
//! Every entity (hop noise, eavesdropper, protocol, key generation, ...) draws
//! from its own ChaCha stream whose seed is `SHA-256(class seed ‖ label)`.
//! Streams for different labels are independent, and a stream never depends
//! on how much any other stream has been consumed.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha12Rng;

/// Stream classes whose seed can be overridden independently of the master.
pub const CLASSES: &[&str] = &["noise", "eve", "protocol", "pqc", "payload"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Streams {
    master: u64,
    overrides: BTreeMap<String, u64>,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Self {
            master,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_override(mut self, class: &str, seed: u64) -> Self {
        self.overrides.insert(class.to_string(), seed);
        self
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Raw 32-byte seed for `class/label`.
    pub fn seed(&self, class: &str, label: &str) -> [u8; 32] {
        let base = self.overrides.get(class).copied().unwrap_or(self.master);
        let mut h = Sha256::new();
        h.update(b"srn-stream-v1");
        h.update(base.to_le_bytes());
        h.update(class.as_bytes());
        h.update([0u8]);
        h.update(label.as_bytes());
        h.finalize().into()
    }

    pub fn rng(&self, class: &str, label: &str) -> SimRng {
        SimRng::from_seed(self.seed(class, label))
    }
}

/// Derives a child rng from a parent seed and a counter tuple. Used for
/// counter-keyed randomness, e.g. the noise applied to one transmission batch.
pub fn keyed_rng(seed: &[u8; 32], key: &[u64]) -> SimRng {
    let mut h = Sha256::new();
    h.update(seed);
    for k in key {
        h.update(k.to_le_bytes());
    }
    SimRng::from_seed(h.finalize().into())
}
