//! Policy optimization with belief-entropy dense rewards.
//!
//! One iteration: sample `G` rollouts for each of `prompts_per_batch` tasks
//! against a frozen snapshot, score every turn with
//! `R_k = α σ(−Ĥ(m_k)) + r_final`, standardize per depth within each group,
//! average over the remaining turns, and take an ascent step on the clipped
//! surrogate minus the KL penalty to the initial policy.

pub mod advantage;
mod config;
pub mod objective;

pub use advantage::{
    group_advantages, sub_trajectory_reward, turn_level_advantages, AdvantageError, AdvantageTable,
};
pub use config::{OptimizerKind, TrainerConfig, TrainerConfigError};
pub use objective::{
    batch_objective_and_gradient, clipped_surrogate, ObjectiveError, ObjectiveValue, RolloutGroup,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{generate_task, rollout, RolloutConfig, SyntheticTask, TaskError, Trajectory};
use crate::policy::{Gradient, PolicyError, PolicyParameters};
use crate::rng::{labels, SeedStreams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] TrainerConfigError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Advantage(#[from] AdvantageError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("parameters became non-finite at version {0}")]
    NonFinite(u64),
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
struct Optimizer {
    kind: OptimizerKind,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    fn new(kind: OptimizerKind, len: usize) -> Self {
        let buf = |on: bool| if on { vec![0.0; len] } else { Vec::new() };
        Self {
            kind,
            first: buf(kind == OptimizerKind::Adam),
            second: buf(kind == OptimizerKind::Adam),
            steps: 0,
        }
    }

    /// Ascent direction scaled by the learning rate.
    fn delta(&mut self, grad: &Gradient, lr: f64) -> Vec<f64> {
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => grad.values.iter().map(|g| lr * g).collect(),
            OptimizerKind::Adam => {
                let c1 = 1.0 - ADAM_BETA1.powf(self.steps as f64);
                let c2 = 1.0 - ADAM_BETA2.powf(self.steps as f64);
                grad.values
                    .iter()
                    .zip(self.first.iter_mut().zip(self.second.iter_mut()))
                    .map(|(&g, (m, v))| {
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                        lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS)
                    })
                    .collect()
            }
        }
    }
}

/// Live parameters, the frozen reference, and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub params: PolicyParameters,
    pub reference: PolicyParameters,
    pub iteration: u64,
    optimizer: Optimizer,
}

impl TrainerState {
    /// Fresh state with uniformly random token-feature weights from the init
    /// stream.
    pub fn initialize(
        config: &TrainerConfig,
        rollout: &RolloutConfig,
        streams: &SeedStreams,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        let mut rng = streams.stream(labels::INIT, &[]);
        let mut params = PolicyParameters::random_uniform(
            rollout.task.vocab_size,
            rollout.feature_dim(),
            config.init_scale,
            &mut rng,
        );
        // Role, position and turn columns start at zero.
        let bags = rollout.layout.role_offset();
        for token in 0..rollout.task.vocab_size {
            for feature in bags..rollout.feature_dim() {
                params.set_weight(token, feature, 0.0);
            }
            let own = rollout.layout.memory_offset() + token;
            params.set_weight(
                token,
                own,
                params.weight(token, own) + config.memory_copy_prior,
            );
        }
        Ok(Self::from_params(config, params))
    }

    /// State that resumes from given parameters, which also serve as reference.
    pub fn from_params(config: &TrainerConfig, params: PolicyParameters) -> Self {
        let len = params.weights().len();
        Self {
            reference: params.clone(),
            params,
            iteration: 0,
            optimizer: Optimizer::new(config.optimizer, len),
        }
    }
}

/// Per-iteration record written to the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub iteration: u64,
    pub policy_version: u64,
    pub num_trajectories: usize,
    pub mean_outcome: f64,
    pub mean_belief_entropy: Vec<f64>,
    pub objective: f64,
    pub kl: f64,
    pub grad_norm: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub metrics: StepMetrics,
    pub groups: Vec<RolloutGroup>,
}

/// Tasks of training iteration `iteration`; ids are globally unique.
pub fn training_tasks(
    rollout: &RolloutConfig,
    streams: &SeedStreams,
    iteration: u64,
    prompts_per_batch: usize,
) -> Result<Vec<SyntheticTask>, TaskError> {
    (0..prompts_per_batch as u64)
        .map(|j| {
            let id = iteration * prompts_per_batch as u64 + j;
            generate_task(
                &rollout.task,
                id,
                &mut streams.stream(labels::TASK_GEN, &[id]),
            )
        })
        .collect()
}

/// Samples `members` rollouts per task in parallel. Output order is
/// `(task, member)` regardless of thread count.
pub fn sample_groups(
    params: &PolicyParameters,
    rollout_cfg: &RolloutConfig,
    tasks: &[SyntheticTask],
    members: usize,
    streams: &SeedStreams,
    label: &str,
) -> Result<Vec<Vec<Trajectory>>, PolicyError> {
    let jobs: Vec<(usize, usize)> = (0..tasks.len())
        .flat_map(|t| (0..members).map(move |m| (t, m)))
        .collect();
    let flat: Vec<Trajectory> = jobs
        .par_iter()
        .map(|&(t, m)| {
            let task = &tasks[t];
            let mut rng = streams.stream(label, &[params.version(), task.id, m as u64]);
            rollout(params, rollout_cfg, task, m, &mut rng)
        })
        .collect::<Result<_, _>>()?;
    let mut flat = flat.into_iter();
    Ok((0..tasks.len())
        .map(|_| flat.by_ref().take(members).collect())
        .collect())
}

/// One iteration: rollouts, advantages, `update_epochs` optimizer steps.
pub fn train_step(
    state: &mut TrainerState,
    config: &TrainerConfig,
    rollout_cfg: &RolloutConfig,
    tasks: &[SyntheticTask],
    streams: &SeedStreams,
) -> Result<StepOutput, TrainError> {
    let old = state.params.clone();
    let sampled = sample_groups(
        &old,
        rollout_cfg,
        tasks,
        config.group_size,
        streams,
        labels::ROLLOUT,
    )?;
    let groups = sampled
        .into_iter()
        .map(|trajectories| {
            let be: Vec<Vec<f64>> = trajectories.iter().map(|t| t.belief_entropies()).collect();
            let outcomes: Vec<f64> = trajectories.iter().map(|t| t.outcome_reward).collect();
            let table = AdvantageTable::build(&be, &outcomes, config.alpha, config.std_floor)?;
            Ok(RolloutGroup {
                trajectories,
                table,
            })
        })
        .collect::<Result<Vec<_>, AdvantageError>>()?;

    let mut first: Option<(ObjectiveValue, f64)> = None;
    for _ in 0..config.update_epochs {
        let (value, grad) = batch_objective_and_gradient(
            &state.params,
            &state.reference,
            &old,
            &groups,
            rollout_cfg,
            config,
        )?;
        first.get_or_insert((value, grad.norm()));
        let delta = state.optimizer.delta(&grad, config.learning_rate);
        state.params.apply_step(&delta);
        if !state.params.all_finite() {
            return Err(TrainError::NonFinite(state.params.version()));
        }
    }
    let (value, grad_norm) = first.expect("at least one epoch");

    let all: Vec<&Trajectory> = groups.iter().flat_map(|g| &g.trajectories).collect();
    let n = all.len().max(1) as f64;
    let turns = rollout_cfg.task.num_turns;
    let mut mean_be = vec![0.0; turns];
    for traj in &all {
        for (acc, be) in mean_be.iter_mut().zip(traj.belief_entropies()) {
            *acc += be / n;
        }
    }
    let metrics = StepMetrics {
        iteration: state.iteration,
        policy_version: state.params.version(),
        num_trajectories: all.len(),
        mean_outcome: all.iter().map(|t| t.outcome_reward).sum::<f64>() / n,
        mean_belief_entropy: mean_be,
        objective: value.objective,
        kl: value.kl,
        grad_norm,
        clip_fraction: value.clip_fraction,
    };
    state.iteration += 1;
    Ok(StepOutput { metrics, groups })
}

/// Runs `num_iterations` steps, handing each result to `observer` (for
/// logging and checkpointing) before the next begins.
pub fn train_loop<E: From<TrainError>>(
    state: &mut TrainerState,
    config: &TrainerConfig,
    rollout_cfg: &RolloutConfig,
    streams: &SeedStreams,
    num_iterations: u64,
    mut observer: impl FnMut(&TrainerState, &StepOutput) -> Result<(), E>,
) -> Result<Vec<StepMetrics>, E> {
    config.validate().map_err(TrainError::from)?;
    let mut history = Vec::with_capacity(num_iterations as usize);
    for _ in 0..num_iterations {
        let tasks = training_tasks(
            rollout_cfg,
            streams,
            state.iteration,
            config.prompts_per_batch,
        )
        .map_err(TrainError::from)?;
        let out = train_step(state, config, rollout_cfg, &tasks, streams)?;
        observer(state, &out)?;
        history.push(out.metrics);
    }
    Ok(history)
}

/// Evaluation tasks, independent of the training task stream.
pub fn evaluation_tasks(
    rollout: &RolloutConfig,
    streams: &SeedStreams,
    num_tasks: usize,
) -> Result<Vec<SyntheticTask>, TaskError> {
    (0..num_tasks as u64)
        .map(|id| {
            generate_task(
                &rollout.task,
                id,
                &mut streams.stream(labels::EVAL_TASK, &[id]),
            )
        })
        .collect()
}

/// `candidates` frozen-policy rollouts for each of `num_tasks` evaluation
/// tasks. Rollout streams ignore the parameter version so that different
/// checkpoints are compared on identical randomness.
pub fn evaluate(
    params: &PolicyParameters,
    rollout_cfg: &RolloutConfig,
    streams: &SeedStreams,
    num_tasks: usize,
    candidates: usize,
) -> Result<Vec<Vec<Trajectory>>, TrainError> {
    let tasks = evaluation_tasks(rollout_cfg, streams, num_tasks)?;
    let jobs: Vec<(usize, usize)> = (0..tasks.len())
        .flat_map(|t| (0..candidates).map(move |m| (t, m)))
        .collect();
    let flat: Vec<Trajectory> = jobs
        .par_iter()
        .map(|&(t, m)| {
            let mut rng = streams.stream(labels::EVAL_ROLLOUT, &[tasks[t].id, m as u64]);
            rollout(params, rollout_cfg, &tasks[t], m, &mut rng)
        })
        .collect::<Result<_, _>>()?;
    let mut flat = flat.into_iter();
    Ok((0..tasks.len())
        .map(|_| flat.by_ref().take(candidates).collect())
        .collect())
}
