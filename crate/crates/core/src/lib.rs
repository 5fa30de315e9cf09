//! Belief-aware memory agents on exactly enumerable synthetic tasks.
//!
//! The crate pairs exact finite-POMDP machinery (Bayes filter, summary-induced
//! beliefs, information measures) with a small softmax-linear token policy
//! that writes a bounded memory each turn. Training uses dense rewards built
//! from the belief entropy of the policy's answer to a fixed anchor question,
//! group-standardized advantages averaged over the remaining turns, and a
//! clipped policy-gradient surrogate with a KL penalty.

pub mod agent;
pub mod analysis;
pub mod belief_entropy;
pub mod experiment;
pub mod policy;
pub mod pomdp;
pub mod rng;
pub mod trainer;
