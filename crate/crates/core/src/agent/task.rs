use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{TokenId, Vocabulary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("unsatisfiable task configuration `{field}`: {reason}")]
    UnsatisfiableConfig { field: &'static str, reason: String },
}

/// Parameters of the synthetic multi-hop evidence task family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    /// Number of latent facts `F`.
    pub num_facts: usize,
    /// Values per fact `K`.
    pub fact_domain: usize,
    /// Turns `T` (observation chunks) per episode.
    pub num_turns: usize,
    /// Tokens per observation chunk.
    pub chunk_length: usize,
    /// Probability that a non-evidence chunk slot holds a distractor.
    pub distractor_rate: f64,
    /// Memory budget `M` in tokens.
    pub memory_budget: usize,
    /// Vocabulary size `V`.
    pub vocab_size: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            num_facts: 1,
            fact_domain: 2,
            num_turns: 2,
            chunk_length: 16,
            distractor_rate: 0.3,
            memory_budget: 8,
            vocab_size: 16,
        }
    }
}

impl TaskError {
    /// Name of the offending setting.
    pub fn field(&self) -> &'static str {
        match self {
            Self::UnsatisfiableConfig { field, .. } => field,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<Vocabulary, TaskError> {
        let bad = |field, reason: String| Err(TaskError::UnsatisfiableConfig { field, reason });
        if self.num_facts == 0 {
            return bad("num_facts", "num_facts must be at least 1".into());
        }
        if self.num_turns < self.num_facts {
            return bad(
                "num_turns",
                format!(
                    "num_turns {} < num_facts {}: some fact would never be observed",
                    self.num_turns, self.num_facts
                ),
            );
        }
        if self.chunk_length == 0 {
            return bad("chunk_length", "chunk_length must be at least 1".into());
        }
        if self.memory_budget == 0 {
            return bad("memory_budget", "memory_budget must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.distractor_rate) {
            return bad(
                "distractor_rate",
                format!("distractor_rate {} outside [0, 1]", self.distractor_rate),
            );
        }
        let vocab =
            Vocabulary::new(self.vocab_size, self.num_facts, self.fact_domain).map_err(|e| {
                TaskError::UnsatisfiableConfig {
                    field: "vocab_size",
                    reason: e.to_string(),
                }
            })?;
        if self.distractor_rate > 0.0 && vocab.distractors().is_empty() {
            return bad(
                "distractor_rate",
                "distractor_rate > 0 but the vocabulary has no distractor ids".into(),
            );
        }
        Ok(vocab)
    }
}

/// One episode: hidden fact values and the observation chunks revealing them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub id: u64,
    /// Latent value of each fact.
    pub hidden: Vec<usize>,
    /// Per turn: the fact revealed on that turn and its evidence token.
    pub schedule: Vec<Option<(usize, TokenId)>>,
    pub chunks: Vec<Vec<TokenId>>,
}

impl SyntheticTask {
    pub fn num_turns(&self) -> usize {
        self.chunks.len()
    }
}

/// Samples a solvable task: each fact is revealed on exactly one distinct
/// turn, hidden values are uniform.
pub fn generate_task(
    config: &TaskConfig,
    id: u64,
    rng: &mut impl Rng,
) -> Result<SyntheticTask, TaskError> {
    let vocab = config.validate()?;
    let hidden: Vec<usize> = (0..config.num_facts)
        .map(|_| rng.gen_range(0..config.fact_domain))
        .collect();
    let mut turns: Vec<usize> = (0..config.num_turns).collect();
    turns.shuffle(rng);
    let mut schedule = vec![None; config.num_turns];
    for (fact, &turn) in turns.iter().take(config.num_facts).enumerate() {
        schedule[turn] = Some((fact, vocab.evidence(fact, hidden[fact])));
    }
    let distractors = vocab.distractors();
    let chunks = schedule
        .iter()
        .map(|slot| {
            let mut chunk: Vec<TokenId> = (0..config.chunk_length)
                .map(|_| {
                    if config.distractor_rate > 0.0 && rng.gen_bool(config.distractor_rate) {
                        rng.gen_range(distractors.clone())
                    } else {
                        Vocabulary::PAD
                    }
                })
                .collect();
            if let Some((_, token)) = slot {
                let at = rng.gen_range(0..config.chunk_length);
                chunk[at] = *token;
            }
            chunk
        })
        .collect();
    Ok(SyntheticTask {
        id,
        hidden,
        schedule,
        chunks,
    })
}
