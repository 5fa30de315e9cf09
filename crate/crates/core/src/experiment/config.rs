//! TOML experiment configuration.
//!
//! Every section and field is optional; omitted values take the defaults
//! shown below. Unknown keys are rejected.
//!
//! ```toml
//! seed = 0
//! output_dir = "out"
//!
//! [task]
//! num_facts = 1
//! fact_domain = 2
//! num_turns = 2
//! chunk_length = 16
//! distractor_rate = 0.3
//! memory_budget = 8
//! vocab_size = 16
//!
//! [agent]
//! anchor = "progress-gap"      # gap-only, direct-answer
//! candidates = "full-vocab"    # { top-k = 4 }, { top-p = 0.9 }
//! anchor_max_len = 4
//!
//! [trainer]
//! alpha = 0.5
//! beta = 0.001
//! clip_epsilon = 0.2
//! group_size = 16
//! learning_rate = 0.003
//! std_floor = 1e-6
//! prompts_per_batch = 16
//! optimizer = "adam"           # or "sgd"
//! update_epochs = 1
//! answer_tokens_get_advantage = false
//! init_scale = 0.3
//! memory_copy_prior = 2.0
//!
//! [run]
//! iterations = 200
//! checkpoint_interval = 50     # 0 keeps only the initial and final checkpoints
//! trajectory_log_interval = 10 # 0 disables the training trajectory log
//!
//! [eval]
//! episodes = 500
//! candidates = 5
//! success_threshold = 1.0
//!
//! [ablation]
//! num_seeds = 5
//! variants = ["progress-gap", "gap-only", "direct-answer", "outcome-only"]
//! ```
//!
//! TOML integers are signed, so `seed` in the file is limited to
//! `0..=i64::MAX`; the command-line override accepts any `u64`.
//!
//! The config hash covers `task`, `agent` and `trainer`: the sections that
//! determine the shape and meaning of a checkpoint.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::{RolloutConfig, TaskConfig, DEFAULT_ANCHOR_MAX_LEN};
use crate::belief_entropy::{AnchorQuestion, AnchorVariant, CandidateSetPolicy};
use crate::trainer::TrainerConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Read { path: String, reason: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub anchor: AnchorVariant,
    pub candidates: CandidateSetPolicy,
    pub anchor_max_len: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            anchor: AnchorVariant::ProgressGap,
            candidates: CandidateSetPolicy::FullVocab,
            anchor_max_len: DEFAULT_ANCHOR_MAX_LEN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub iterations: u64,
    pub checkpoint_interval: u64,
    pub trajectory_log_interval: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            checkpoint_interval: 50,
            trajectory_log_interval: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Evaluation tasks.
    pub episodes: usize,
    /// Rollouts per task; best-of-N compares these.
    pub candidates: usize,
    /// Outcome at or above which a trajectory counts as a success.
    pub success_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            candidates: 5,
            success_threshold: 1.0,
        }
    }
}

/// One column of the anchor ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationVariant {
    ProgressGap,
    GapOnly,
    DirectAnswer,
    /// No belief-entropy reward; BE is still measured with the default anchor.
    OutcomeOnly,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        Self::ProgressGap,
        Self::GapOnly,
        Self::DirectAnswer,
        Self::OutcomeOnly,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::ProgressGap => "progress-gap",
            Self::GapOnly => "gap-only",
            Self::DirectAnswer => "direct-answer",
            Self::OutcomeOnly => "outcome-only",
        }
    }

    /// `base` with this variant's anchor and reward weight.
    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut config = base.clone();
        match self {
            Self::ProgressGap => config.agent.anchor = AnchorVariant::ProgressGap,
            Self::GapOnly => config.agent.anchor = AnchorVariant::GapOnly,
            Self::DirectAnswer => config.agent.anchor = AnchorVariant::DirectAnswer,
            Self::OutcomeOnly => {
                config.agent.anchor = AnchorVariant::ProgressGap;
                config.trainer.alpha = 0.0;
            }
        }
        config
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Seeds `seed, seed + 1, …` shared by every variant.
    pub num_seeds: u64,
    pub variants: Vec<AblationVariant>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            num_seeds: 5,
            variants: AblationVariant::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub task: TaskConfig,
    pub agent: AgentConfig,
    pub trainer: TrainerConfig,
    pub run: RunConfig,
    pub eval: EvalConfig,
    pub ablation: AblationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            task: TaskConfig::default(),
            agent: AgentConfig::default(),
            trainer: TrainerConfig::default(),
            run: RunConfig::default(),
            eval: EvalConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

#[derive(Serialize)]
struct HashedSections<'a> {
    task: &'a TaskConfig,
    agent: &'a AgentConfig,
    trainer: &'a TrainerConfig,
}

impl ExperimentConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    /// Fails only when `seed` exceeds `i64::MAX`.
    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Invalid {
            field: "seed".into(),
            reason: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field: &str, reason: String| ConfigError::Invalid {
            field: field.to_string(),
            reason,
        };
        self.rollout_config()?;
        self.trainer
            .validate()
            .map_err(|e| invalid(&format!("trainer.{}", e.field), e.reason))?;
        if self.eval.candidates == 0 {
            return Err(invalid("eval.candidates", "must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eval.success_threshold) {
            return Err(invalid(
                "eval.success_threshold",
                "must lie in [0, 1]".into(),
            ));
        }
        if self.ablation.variants.is_empty() {
            return Err(invalid("ablation.variants", "must not be empty".into()));
        }
        for (i, v) in self.ablation.variants.iter().enumerate() {
            if self.ablation.variants[..i].contains(v) {
                return Err(invalid(
                    "ablation.variants",
                    format!("{} listed twice", v.name()),
                ));
            }
        }
        Ok(())
    }

    pub fn rollout_config(&self) -> Result<RolloutConfig, ConfigError> {
        RolloutConfig::new(
            self.task,
            AnchorQuestion::new(self.agent.anchor),
            self.agent.candidates,
            self.agent.anchor_max_len,
        )
        .map_err(|e| {
            let field = e.field();
            let section = match field {
                "candidates" | "anchor_max_len" => "agent",
                _ => "task",
            };
            ConfigError::Invalid {
                field: format!("{section}.{field}"),
                reason: e.to_string(),
            }
        })
    }

    /// First 8 bytes (big-endian) of SHA-256 over the canonical JSON of the
    /// hashed sections.
    pub fn config_hash(&self) -> u64 {
        let canonical = serde_json::to_vec(&HashedSections {
            task: &self.task,
            agent: &self.agent,
            trainer: &self.trainer,
        })
        .expect("config serializes");
        let digest = Sha256::digest(&canonical);
        u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    pub fn config_hash_hex(&self) -> String {
        format!("{:016x}", self.config_hash())
    }
}
