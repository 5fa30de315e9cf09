//! Recursive-memory agent loop on synthetic evidence tasks.
//!
//! Each turn the policy rewrites a bounded memory from the previous memory
//! and the current observation chunk only; the anchor question is then posed
//! against the new memory and its belief entropy recorded. After the last
//! turn the answer is read from memory alone.

pub mod log;
mod task;

pub use task::{generate_task, SyntheticTask, TaskConfig, TaskError};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief_entropy::{
    estimate_belief_entropy, AnchorQuestion, BeliefEntropyEstimate, CandidateSetPolicy,
};
use crate::policy::{
    argmax_among, sample_sequence, token_distribution, ContextFeatures, FeatureLayout, PolicyError,
    PolicyParameters, Role, SampledSequence, TokenId, Vocabulary,
};

/// Default anchor response cap.
pub const DEFAULT_ANCHOR_MAX_LEN: usize = 4;

/// The bounded memory `m_t`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryState {
    pub tokens: Vec<TokenId>,
    /// Turn that produced this memory; 0 for the empty initial memory.
    pub turn: usize,
}

/// Everything a rollout needs besides parameters and a task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutConfig {
    pub task: TaskConfig,
    pub vocab: Vocabulary,
    pub layout: FeatureLayout,
    pub anchor: AnchorQuestion,
    pub candidates: CandidateSetPolicy,
    pub anchor_max_len: usize,
}

impl RolloutConfig {
    pub fn new(
        task: TaskConfig,
        anchor: AnchorQuestion,
        candidates: CandidateSetPolicy,
        anchor_max_len: usize,
    ) -> Result<Self, TaskError> {
        let vocab = task.validate()?;
        candidates
            .validate(task.vocab_size)
            .map_err(|reason| TaskError::UnsatisfiableConfig {
                field: "candidates",
                reason,
            })?;
        if anchor_max_len == 0 {
            return Err(TaskError::UnsatisfiableConfig {
                field: "anchor_max_len",
                reason: "must be at least 1".into(),
            });
        }
        let positions = task.memory_budget.max(anchor_max_len).max(task.num_facts);
        Ok(Self {
            task,
            vocab,
            layout: FeatureLayout::new(task.vocab_size, positions),
            anchor,
            candidates,
            anchor_max_len,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.layout.dim()
    }

    fn turn_fraction(&self, turn: usize) -> f64 {
        turn as f64 / self.task.num_turns as f64
    }

    /// Context for writing `m_t` from `(m_{t-1}, o_t)`.
    pub fn memory_context(&self, previous: &MemoryState, obs: &[TokenId]) -> ContextFeatures {
        self.layout.context(
            Role::MemoryWrite,
            &previous.tokens,
            obs,
            Some(self.turn_fraction(previous.turn + 1)),
        )
    }

    /// Context for answer slot decoding from the final memory. It carries
    /// no turn feature: the answer is always given after the last turn.
    pub fn answer_context(&self, memory: &MemoryState) -> ContextFeatures {
        self.layout
            .context(Role::Answer, &memory.tokens, &[Vocabulary::ANSWER], None)
    }
}

/// Output of one memory update.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryUpdate {
    pub memory: MemoryState,
    /// Generated tokens including a terminating end-of-sequence, with
    /// log-probabilities under the sampling parameters.
    pub written: SampledSequence,
}

/// `m_t ~ π_θ(· | m_{t-1}, o_t)`.
pub fn update_memory(
    params: &PolicyParameters,
    config: &RolloutConfig,
    memory: &MemoryState,
    obs: &[TokenId],
    rng: &mut impl Rng,
) -> Result<MemoryUpdate, PolicyError> {
    let ctx = config.memory_context(memory, obs);
    let written = sample_sequence(params, &ctx, config.task.memory_budget, rng)?;
    let tokens = written
        .tokens
        .iter()
        .copied()
        .filter(|&t| t != Vocabulary::EOS)
        .collect();
    Ok(MemoryUpdate {
        memory: MemoryState {
            tokens,
            turn: memory.turn + 1,
        },
        written,
    })
}

/// Greedy answer per fact slot, restricted to that fact's value tokens, and
/// the fraction of slots answered correctly.
pub fn answer_and_score(
    params: &PolicyParameters,
    config: &RolloutConfig,
    memory: &MemoryState,
    task: &SyntheticTask,
) -> Result<(Vec<TokenId>, f64), PolicyError> {
    let ctx = config.answer_context(memory);
    let mut answer = Vec::with_capacity(task.hidden.len());
    let mut correct = 0usize;
    for (fact, &value) in task.hidden.iter().enumerate() {
        let dist = token_distribution(params, &ctx.at_position(fact))?;
        let token = argmax_among(&dist.logits, config.vocab.fact_candidates(fact));
        if token == config.vocab.evidence(fact, value) {
            correct += 1;
        }
        answer.push(token);
    }
    Ok((answer, correct as f64 / task.hidden.len() as f64))
}

/// One turn of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnRecord {
    pub observation: Vec<TokenId>,
    pub memory: MemoryState,
    pub written: SampledSequence,
    pub belief: BeliefEntropyEstimate,
}

/// A complete episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub task_id: u64,
    pub member: usize,
    pub policy_version: u64,
    pub hidden: Vec<usize>,
    pub turns: Vec<TurnRecord>,
    pub answer: Vec<TokenId>,
    pub outcome_reward: f64,
}

impl Trajectory {
    pub fn belief_entropies(&self) -> Vec<f64> {
        self.turns.iter().map(|t| t.belief.value).collect()
    }

    /// Memory that was in place before turn `t` (0-based) was written.
    pub fn memory_before(&self, turn: usize) -> MemoryState {
        if turn == 0 {
            MemoryState::default()
        } else {
            self.turns[turn - 1].memory.clone()
        }
    }
}

/// Runs all turns, belief-entropy probes and the final answer.
pub fn rollout(
    params: &PolicyParameters,
    config: &RolloutConfig,
    task: &SyntheticTask,
    member: usize,
    rng: &mut impl Rng,
) -> Result<Trajectory, PolicyError> {
    let mut memory = MemoryState::default();
    let mut turns = Vec::with_capacity(task.num_turns());
    for obs in &task.chunks {
        let update = update_memory(params, config, &memory, obs, rng)?;
        memory = update.memory;
        let belief = estimate_belief_entropy(
            params,
            &config.layout,
            &memory.tokens,
            config.turn_fraction(memory.turn),
            &config.anchor,
            config.candidates,
            config.anchor_max_len,
        )?;
        turns.push(TurnRecord {
            observation: obs.clone(),
            memory: memory.clone(),
            written: update.written,
            belief,
        });
    }
    let (answer, outcome_reward) = answer_and_score(params, config, &memory, task)?;
    Ok(Trajectory {
        task_id: task.id,
        member,
        policy_version: params.version(),
        hidden: task.hidden.clone(),
        turns,
        answer,
        outcome_reward,
    })
}
