use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid trainer setting `{field}`: {reason}")]
pub struct TrainerConfigError {
    pub field: &'static str,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// Plain gradient ascent.
    #[default]
    Sgd,
    /// Adaptive moments (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
    Adam,
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    /// Weight of the belief-entropy term in every dense reward.
    pub alpha: f64,
    /// KL penalty coefficient against the reference policy.
    pub beta: f64,
    pub clip_epsilon: f64,
    /// Rollouts per task (G).
    pub group_size: usize,
    pub learning_rate: f64,
    /// Groups whose reward spread falls below this get zero advantages.
    pub std_floor: f64,
    /// Distinct tasks per batch; batch size is this times `group_size`.
    pub prompts_per_batch: usize,
    pub optimizer: OptimizerKind,
    /// Optimizer steps taken on each rollout batch.
    pub update_epochs: usize,
    /// Also credit the final answer tokens with the last-turn advantage.
    pub answer_tokens_get_advantage: bool,
    /// Half-width of the uniform initial weight distribution.
    pub init_scale: f64,
    /// Added to each token's weight on its own memory-bag count, so the
    /// untrained policy tends to repeat what memory already holds.
    pub memory_copy_prior: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 1e-3,
            clip_epsilon: 0.2,
            group_size: 16,
            learning_rate: 3e-3,
            std_floor: 1e-6,
            prompts_per_batch: 16,
            optimizer: OptimizerKind::Adam,
            update_epochs: 1,
            answer_tokens_get_advantage: false,
            init_scale: 0.3,
            memory_copy_prior: 2.0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainerConfigError> {
        let bad = |field, reason: &str| {
            Err(TrainerConfigError {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad("alpha", "must be finite and non-negative");
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad("beta", "must be finite and non-negative");
        }
        if !(self.clip_epsilon.is_finite() && self.clip_epsilon > 0.0) {
            return bad("clip_epsilon", "must be positive");
        }
        if self.group_size < 2 {
            return bad("group_size", "must be at least 2");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate", "must be finite and non-negative");
        }
        if !(self.std_floor.is_finite() && self.std_floor > 0.0) {
            return bad("std_floor", "must be positive");
        }
        if self.prompts_per_batch == 0 {
            return bad("prompts_per_batch", "must be at least 1");
        }
        if self.update_epochs == 0 {
            return bad("update_epochs", "must be at least 1");
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return bad("init_scale", "must be finite and non-negative");
        }
        if !self.memory_copy_prior.is_finite() {
            return bad("memory_copy_prior", "must be finite");
        }
        Ok(())
    }
}
