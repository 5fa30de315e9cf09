//! Line-delimited JSON trajectory log.
//!
//! One record per trajectory. Field names are stable and consumed by the
//! analysis module:
//!
//! | field             | type          | meaning                                         |
//! |-------------------|---------------|-------------------------------------------------|
//! | `iteration`       | int or null   | training iteration; null for evaluation rollouts |
//! | `task_id`         | int           | task index within its stream                    |
//! | `member`          | int           | group member / candidate index                  |
//! | `seed`            | int           | master seed of the run                          |
//! | `config_hash`     | hex string    | hash of the experiment configuration            |
//! | `policy_version`  | int           | parameter version used for the rollout          |
//! | `hidden`          | [int]         | latent fact values                              |
//! | `memory`          | [[int]]       | memory tokens after each turn                   |
//! | `belief_entropy`  | [float]       | belief entropy after each turn, nats            |
//! | `anchor_response` | [[int]]       | greedy anchor response after each turn          |
//! | `answer`          | [int]         | answer token per fact                           |
//! | `outcome_reward`  | float         | fraction of facts answered correctly            |
//! | `sub_rewards`     | [float]       | dense reward per depth; empty if not computed   |

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Trajectory;
use crate::policy::TokenId;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {reason}")]
    Invalid { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryLogRecord {
    pub iteration: Option<u64>,
    pub task_id: u64,
    pub member: usize,
    pub seed: u64,
    pub config_hash: String,
    pub policy_version: u64,
    pub hidden: Vec<usize>,
    pub memory: Vec<Vec<TokenId>>,
    pub belief_entropy: Vec<f64>,
    pub anchor_response: Vec<Vec<TokenId>>,
    pub answer: Vec<TokenId>,
    pub outcome_reward: f64,
    #[serde(default)]
    pub sub_rewards: Vec<f64>,
}

/// Run-level fields shared by every record of one log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogContext {
    pub iteration: Option<u64>,
    pub seed: u64,
    pub config_hash: String,
}

impl TrajectoryLogRecord {
    pub fn from_trajectory(traj: &Trajectory, ctx: &LogContext, sub_rewards: Vec<f64>) -> Self {
        Self {
            iteration: ctx.iteration,
            task_id: traj.task_id,
            member: traj.member,
            seed: ctx.seed,
            config_hash: ctx.config_hash.clone(),
            policy_version: traj.policy_version,
            hidden: traj.hidden.clone(),
            memory: traj.turns.iter().map(|t| t.memory.tokens.clone()).collect(),
            belief_entropy: traj.belief_entropies(),
            anchor_response: traj
                .turns
                .iter()
                .map(|t| t.belief.response.clone())
                .collect(),
            answer: traj.answer.clone(),
            outcome_reward: traj.outcome_reward,
            sub_rewards,
        }
    }

    pub fn num_turns(&self) -> usize {
        self.belief_entropy.len()
    }

    /// First-turn minus last-turn belief entropy (positive means reduced).
    pub fn delta_belief_entropy(&self) -> Option<f64> {
        Some(self.belief_entropy.first()? - self.belief_entropy.last()?)
    }

    pub fn final_belief_entropy(&self) -> Option<f64> {
        self.belief_entropy.last().copied()
    }

    fn check(&self) -> Result<(), String> {
        let turns = self.belief_entropy.len();
        if turns == 0 {
            return Err("record has no turns".into());
        }
        if self.memory.len() != turns || self.anchor_response.len() != turns {
            return Err(format!(
                "per-turn field lengths disagree: memory {}, belief_entropy {turns}, anchor_response {}",
                self.memory.len(),
                self.anchor_response.len()
            ));
        }
        if !self.sub_rewards.is_empty() && self.sub_rewards.len() != turns {
            return Err(format!(
                "sub_rewards has {} entries for {turns} turns",
                self.sub_rewards.len()
            ));
        }
        if let Some(be) = self
            .belief_entropy
            .iter()
            .find(|v| !(v.is_finite() && **v >= 0.0))
        {
            return Err(format!(
                "belief entropy {be} is not a finite non-negative value"
            ));
        }
        if !(0.0..=1.0).contains(&self.outcome_reward) {
            return Err(format!(
                "outcome_reward {} outside [0, 1]",
                self.outcome_reward
            ));
        }
        if self.sub_rewards.iter().any(|r| !r.is_finite()) {
            return Err("non-finite sub reward".into());
        }
        Ok(())
    }
}

pub fn write_record(out: &mut impl Write, record: &TrajectoryLogRecord) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")
}

/// Parses a whole log. Blank lines are skipped; every other line must be a
/// valid record.
pub fn parse_trajectory_log(text: &str) -> Result<Vec<TrajectoryLogRecord>, LogError> {
    read_trajectory_log(text.as_bytes())
}

pub fn read_trajectory_log(reader: impl BufRead) -> Result<Vec<TrajectoryLogRecord>, LogError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrajectoryLogRecord =
            serde_json::from_str(&line).map_err(|source| LogError::Json {
                line: i + 1,
                source,
            })?;
        record.check().map_err(|reason| LogError::Invalid {
            line: i + 1,
            reason,
        })?;
        records.push(record);
    }
    Ok(records)
}
