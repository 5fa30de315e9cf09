//! Named random streams derived from a single master seed.
//!
//! Every consumer of randomness asks for a stream by label plus a list of
//! integer indices (iteration, task, group member, ...). The stream seed is
//! `SHA-256(master_le ‖ label ‖ 0x00 ‖ index_0_le ‖ index_1_le ‖ ...)`, so a
//! stream depends only on its name and never on the order in which streams
//! are requested. Running rollouts on more threads cannot change results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The generator used everywhere in the crate.
pub type StreamRng = ChaCha8Rng;

/// Stream labels used by the training and evaluation code.
pub mod labels {
    pub const TASK_GEN: &str = "task-gen";
    pub const ROLLOUT: &str = "rollout";
    pub const INIT: &str = "init";
    pub const EVAL_TASK: &str = "eval-task";
    pub const EVAL_ROLLOUT: &str = "eval-rollout";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    master: u64,
}

impl SeedStreams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Raw 32-byte seed for a named stream.
    pub fn seed_bytes(&self, label: &str, indices: &[u64]) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.master.to_le_bytes());
        hasher.update(label.as_bytes());
        hasher.update([0u8]);
        for idx in indices {
            hasher.update(idx.to_le_bytes());
        }
        hasher.finalize().into()
    }

    pub fn stream(&self, label: &str, indices: &[u64]) -> StreamRng {
        StreamRng::from_seed(self.seed_bytes(label, indices))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = SeedStreams::new(7);
        let a: u64 = s.stream("rollout", &[1, 2]).gen();
        let b: u64 = s.stream("rollout", &[1, 2]).gen();
        let c: u64 = s.stream("rollout", &[2, 1]).gen();
        let d: u64 = s.stream("task-gen", &[1, 2]).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        let e: u64 = SeedStreams::new(8).stream("rollout", &[1, 2]).gen();
        assert_ne!(a, e);
    }
}
