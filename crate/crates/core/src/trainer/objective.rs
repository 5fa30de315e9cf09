//! Clipped token-level surrogate with an exact KL penalty.
//!
//! ```text
//! J(θ) = (1/N) Σ_i Σ_t Σ_j min(ρ A_t, clip(ρ, 1−ε, 1+ε) A_t)  −  β · mean_c KL(π_θ(·|c) ‖ π_ref(·|c))
//! ρ = π_θ(w_j | c) / π_old(w_j | c)
//! ```
//!
//! `N` is the number of trajectories in the batch and `c` ranges over every
//! context at which a credited token was generated.

use thiserror::Error;

use super::advantage::AdvantageTable;
use super::config::TrainerConfig;
use crate::agent::{RolloutConfig, Trajectory};
use crate::policy::{
    categorical_kl, token_distribution, Gradient, PolicyError, PolicyParameters, TokenId,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("trajectory sampled with policy version {found}, old policy is version {expected}")]
    VersionMismatch { expected: u64, found: u64 },
    #[error("advantage table for {table} trajectories attached to a group of {group}")]
    GroupShape { table: usize, group: usize },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// `(min(ρA, clip(ρ)A), gradient scale)` where the scale multiplies
/// `∇ log π_θ` and is `ρA` when the unclipped branch is selected, else 0.
pub fn clipped_surrogate(
    turn_adv: f64,
    logp_new: f64,
    logp_old: f64,
    clip_epsilon: f64,
) -> (f64, f64) {
    let ratio = (logp_new - logp_old).exp();
    let unclipped = ratio * turn_adv;
    let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon) * turn_adv;
    if unclipped <= clipped {
        (unclipped, unclipped)
    } else {
        (clipped, 0.0)
    }
}

/// Trajectories of one task together with their advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub trajectories: Vec<Trajectory>,
    pub table: AdvantageTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveValue {
    /// Surrogate minus the KL penalty.
    pub objective: f64,
    pub surrogate: f64,
    /// Mean KL to the reference policy over visited contexts.
    pub kl: f64,
    pub num_tokens: usize,
    /// Fraction of credited tokens whose clipped branch was selected.
    pub clip_fraction: f64,
}

/// Every credited token: context features, token, turn advantage.
fn for_each_credited_token(
    groups: &[RolloutGroup],
    rollout: &RolloutConfig,
    include_answer: bool,
    mut f: impl FnMut(&[f64], TokenId, f64) -> Result<(), ObjectiveError>,
) -> Result<(), ObjectiveError> {
    for group in groups {
        for (traj, adv) in group.trajectories.iter().zip(&group.table.turn_advantages) {
            for (t, turn) in traj.turns.iter().enumerate() {
                let ctx = rollout.memory_context(&traj.memory_before(t), &turn.observation);
                for (j, &token) in turn.written.tokens.iter().enumerate() {
                    f(&ctx.at_position(j), token, adv[t])?;
                }
            }
            if include_answer {
                if let (Some(last), Some(&adv_last)) = (traj.turns.last(), adv.last()) {
                    let ctx = rollout.answer_context(&last.memory);
                    for (f_idx, &token) in traj.answer.iter().enumerate() {
                        f(&ctx.at_position(f_idx), token, adv_last)?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Objective value and its exact gradient with respect to `params`.
pub fn batch_objective_and_gradient(
    params: &PolicyParameters,
    ref_params: &PolicyParameters,
    old_params: &PolicyParameters,
    groups: &[RolloutGroup],
    rollout: &RolloutConfig,
    config: &TrainerConfig,
) -> Result<(ObjectiveValue, Gradient), ObjectiveError> {
    let mut num_traj = 0usize;
    for group in groups {
        if group.table.group_size() != group.trajectories.len() {
            return Err(ObjectiveError::GroupShape {
                table: group.table.group_size(),
                group: group.trajectories.len(),
            });
        }
        for traj in &group.trajectories {
            if traj.policy_version != old_params.version() {
                return Err(ObjectiveError::VersionMismatch {
                    expected: old_params.version(),
                    found: traj.policy_version,
                });
            }
        }
        num_traj += group.trajectories.len();
    }
    let mut grad = Gradient::zeros_like(params);
    if num_traj == 0 {
        return Ok((ObjectiveValue::default(), grad));
    }

    let total_tokens: usize = groups
        .iter()
        .flat_map(|g| &g.trajectories)
        .map(|traj| {
            let written: usize = traj.turns.iter().map(|t| t.written.tokens.len()).sum();
            written
                + if config.answer_tokens_get_advantage && !traj.turns.is_empty() {
                    traj.answer.len()
                } else {
                    0
                }
        })
        .sum();
    let inv_n = 1.0 / num_traj as f64;
    let kl_scale = if total_tokens > 0 {
        -config.beta / total_tokens as f64
    } else {
        0.0
    };
    let mut surrogate = 0.0;
    let mut kl_sum = 0.0;
    let mut tokens = 0usize;
    let mut clipped = 0usize;
    for_each_credited_token(
        groups,
        rollout,
        config.answer_tokens_get_advantage,
        |phi, token, adv| {
            let new = token_distribution(params, phi)?;
            let old = token_distribution(old_params, phi)?;
            let reference = token_distribution(ref_params, phi)?;
            let (term, scale) = clipped_surrogate(
                adv,
                new.log_prob(token),
                old.log_prob(token),
                config.clip_epsilon,
            );
            surrogate += term;
            tokens += 1;
            if scale == 0.0 && adv != 0.0 {
                clipped += 1;
            }
            if scale != 0.0 {
                grad.add_log_prob_grad(&new, phi, token, scale * inv_n);
            }
            kl_sum += categorical_kl(&new, &reference);
            if kl_scale != 0.0 {
                grad.add_kl_grad(&new, &reference, phi, kl_scale);
            }
            Ok(())
        },
    )?;
    debug_assert_eq!(tokens, total_tokens);
    surrogate *= inv_n;
    let kl = if tokens > 0 {
        kl_sum / tokens as f64
    } else {
        0.0
    };
    let value = ObjectiveValue {
        objective: surrogate - config.beta * kl,
        surrogate,
        kl,
        num_tokens: tokens,
        clip_fraction: if tokens > 0 {
            clipped as f64 / tokens as f64
        } else {
            0.0
        },
    };
    Ok((value, grad))
}
