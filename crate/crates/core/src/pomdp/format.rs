//! POMDP definition files.
//!
//! A definition is a small TOML document; kernels are flat row-major arrays:
//!
//! ```toml
//! num_states = 2
//! num_actions = 1
//! num_observations = 2
//! discount = 0.95
//! initial_belief = [0.6, 0.4]
//! # rows (s, a), columns s'
//! transition = [0.9, 0.1,
//!               0.2, 0.8]
//! # rows (s', a), columns o
//! observation = [0.7, 0.3,
//!                0.4, 0.6]
//! # optional, indexed (s, a); defaults to zeros
//! reward = [0.0, 1.0]
//! ```
//!
//! Every kernel row must sum to one within 1e-12.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DiscretePomdp, PomdpError};

#[derive(Debug, Error)]
pub enum DefinitionError {
    #[error("malformed POMDP definition: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid POMDP definition: {0}")]
    Invalid(#[from] PomdpError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDefinition {
    num_states: usize,
    num_actions: usize,
    num_observations: usize,
    #[serde(default = "default_discount")]
    discount: f64,
    initial_belief: Vec<f64>,
    transition: Vec<f64>,
    observation: Vec<f64>,
    #[serde(default)]
    reward: Option<Vec<f64>>,
}

fn default_discount() -> f64 {
    1.0
}

/// Largest state/action/observation count a definition file may declare.
pub const MAX_DIMENSION: usize = 4096;

pub fn parse_pomdp_definition(text: &str) -> Result<DiscretePomdp, DefinitionError> {
    let raw: RawDefinition = toml::from_str(text)?;
    for (name, n) in [
        ("num_states", raw.num_states),
        ("num_actions", raw.num_actions),
        ("num_observations", raw.num_observations),
    ] {
        if n > MAX_DIMENSION {
            return Err(PomdpError::Shape {
                what: name,
                expected: MAX_DIMENSION,
                actual: n,
            }
            .into());
        }
    }
    let reward = raw
        .reward
        .unwrap_or_else(|| vec![0.0; raw.num_states * raw.num_actions]);
    Ok(DiscretePomdp::new(
        raw.num_states,
        raw.num_actions,
        raw.num_observations,
        raw.transition,
        raw.observation,
        reward,
        raw.discount,
        raw.initial_belief,
    )?)
}

pub fn write_pomdp_definition(pomdp: &DiscretePomdp) -> String {
    let raw = RawDefinition {
        num_states: pomdp.num_states(),
        num_actions: pomdp.num_actions(),
        num_observations: pomdp.num_observations(),
        discount: pomdp.discount(),
        initial_belief: pomdp.initial_belief().probs().to_vec(),
        transition: pomdp.transition_table().to_vec(),
        observation: pomdp.observation_table().to_vec(),
        reward: Some(pomdp.reward_table().to_vec()),
    };
    toml::to_string(&raw).expect("definition serializes")
}
