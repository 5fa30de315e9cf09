//! Experiment runners behind the command-line subcommands.
//!
//! Output directory layout:
//!
//! | file | written by | content |
//! |------|------------|---------|
//! | `config.json` | all | the resolved configuration |
//! | `metrics.jsonl` | train | one [`MetricsRecord`] per iteration |
//! | `trajectories.jsonl` | train | training rollouts every `trajectory_log_interval` iterations |
//! | `checkpoints/initial.ckpt`, `iter-NNNNNN.ckpt`, `final.ckpt` | train | parameters |
//! | `eval-trajectories.jsonl` | eval | frozen-policy rollouts |
//! | `eval-summary.json` | eval | [`EvalSummary`] |
//! | `entropy-curves.tsv`, `entropy-slopes.tsv`, `delta-be-correlation.tsv`, `best-of-n.tsv` | analyze | see [`crate::analysis::tables`] |
//! | `ablation.tsv`, `ablation-runs.tsv` | ablate | see [`crate::analysis::tables`] |
//! | `run-manifest.json` | all | command, wall-clock times |
//!
//! Everything except `run-manifest.json` is a pure function of the
//! configuration and seed.

mod config;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    AblationConfig, AblationVariant, AgentConfig, ConfigError, EvalConfig, ExperimentConfig,
    RunConfig,
};

use crate::agent::log::{
    read_trajectory_log, write_record, LogContext, LogError, TrajectoryLogRecord,
};
use crate::agent::{RolloutConfig, Trajectory};
use crate::analysis::{
    self, best_of_n_comparison, delta_be_correlation, entropy_trajectory_stats, tables,
    AnalysisError, TrajectoryLogSet,
};
use crate::policy::checkpoint::{self, CheckpointError};
use crate::policy::PolicyParameters;
use crate::rng::SeedStreams;
use crate::trainer::{evaluate, train_loop, StepMetrics, TrainError, TrainerState};

/// Confidence level of every one-sided bound reported by the runners.
pub const CONFIDENCE: f64 = 0.95;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("checkpoint {path}: {source}")]
    Checkpoint {
        path: String,
        source: CheckpointError,
    },
    #[error("trajectory log {path}: {source}")]
    Log { path: String, source: LogError },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl ExperimentError {
    /// 2 for configuration problems, 3 for bad or insufficient data,
    /// 4 for violated internal invariants.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Train(TrainError::Config(_) | TrainError::Task(_)) => 2,
            Self::Train(_) => 4,
            Self::Checkpoint { .. } | Self::Log { .. } | Self::Analysis(_) | Self::Io { .. } => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, ExperimentError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    let mut f = create(path)?;
    f.write_all(bytes).map_err(io_err(path))?;
    f.flush().map_err(io_err(path))
}

fn write_json_line(
    out: &mut impl Write,
    path: &Path,
    value: &impl Serialize,
) -> Result<(), ExperimentError> {
    serde_json::to_writer(&mut *out, value).map_err(|e| io_err(path)(std::io::Error::other(e)))?;
    out.write_all(b"\n").map_err(io_err(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Sidecar holding the only non-deterministic outputs.
#[derive(Debug, Clone, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config_hash: String,
    seed: u64,
    started_unix_seconds: u64,
    wall_seconds: f64,
}

fn write_manifest(
    config: &ExperimentConfig,
    command: &str,
    started: SystemTime,
    clock: Instant,
) -> Result<(), ExperimentError> {
    let manifest = RunManifest {
        command,
        config_hash: config.config_hash_hex(),
        seed: config.seed,
        started_unix_seconds: started
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        wall_seconds: clock.elapsed().as_secs_f64(),
    };
    write_json(&config.output_dir.join("run-manifest.json"), &manifest)
}

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub config_hash: String,
    pub seed: u64,
    #[serde(flatten)]
    pub step: StepMetrics,
}

/// Final line printed by `train`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub iterations: u64,
    /// Mean training outcome of the last iteration; `None` with no iterations.
    pub final_mean_outcome: Option<f64>,
    pub final_checkpoint: PathBuf,
}

/// Trains with no file output, handing each step to `observer`.
pub fn train_in_memory(
    config: &ExperimentConfig,
    mut observer: impl FnMut(&TrainerState, &crate::trainer::StepOutput) -> Result<(), ExperimentError>,
) -> Result<(TrainerState, Vec<StepMetrics>), ExperimentError> {
    config.validate()?;
    let rollout = config.rollout_config()?;
    let streams = SeedStreams::new(config.seed);
    let mut state = TrainerState::initialize(&config.trainer, &rollout, &streams)?;
    let history = train_loop(
        &mut state,
        &config.trainer,
        &rollout,
        &streams,
        config.run.iterations,
        &mut observer,
    )?;
    Ok((state, history))
}

pub fn run_train(config: &ExperimentConfig) -> Result<TrainSummary, ExperimentError> {
    let started = SystemTime::now();
    let clock = Instant::now();
    config.validate()?;
    let out = &config.output_dir;
    let hash = config.config_hash();
    let hash_hex = config.config_hash_hex();
    write_json(&out.join("config.json"), config)?;

    let ckpt_dir = out.join("checkpoints");
    let save = |params: &PolicyParameters, name: &str| {
        write_file(&ckpt_dir.join(name), &checkpoint::encode(params, hash))
    };
    let rollout = config.rollout_config()?;
    let initial =
        TrainerState::initialize(&config.trainer, &rollout, &SeedStreams::new(config.seed))?;
    save(&initial.params, "initial.ckpt")?;

    let metrics_path = out.join("metrics.jsonl");
    let traj_path = out.join("trajectories.jsonl");
    let mut metrics = create(&metrics_path)?;
    let mut trajectories = create(&traj_path)?;
    let run = config.run;
    let (state, history) = train_in_memory(config, |state, step| {
        let record = MetricsRecord {
            config_hash: hash_hex.clone(),
            seed: config.seed,
            step: step.metrics.clone(),
        };
        write_json_line(&mut metrics, &metrics_path, &record)?;
        let it = step.metrics.iteration;
        if run.trajectory_log_interval > 0 && it % run.trajectory_log_interval == 0 {
            let ctx = LogContext {
                iteration: Some(it),
                seed: config.seed,
                config_hash: hash_hex.clone(),
            };
            for group in &step.groups {
                for (traj, rewards) in group.trajectories.iter().zip(&group.table.rewards) {
                    let rec = TrajectoryLogRecord::from_trajectory(traj, &ctx, rewards.clone());
                    write_record(&mut trajectories, &rec).map_err(io_err(&traj_path))?;
                }
            }
        }
        if run.checkpoint_interval > 0 && (it + 1) % run.checkpoint_interval == 0 {
            save(&state.params, &format!("iter-{:06}.ckpt", it + 1))?;
        }
        Ok(())
    })?;
    metrics.flush().map_err(io_err(&metrics_path))?;
    trajectories.flush().map_err(io_err(&traj_path))?;
    save(&state.params, "final.ckpt")?;
    write_manifest(config, "train", started, clock)?;
    Ok(TrainSummary {
        iterations: history.len() as u64,
        final_mean_outcome: history.last().map(|m| m.mean_outcome),
        final_checkpoint: ckpt_dir.join("final.ckpt"),
    })
}

/// Loads a checkpoint and checks it against `config`.
pub fn load_checkpoint(
    path: &Path,
    config: &ExperimentConfig,
) -> Result<PolicyParameters, ExperimentError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let wrap = |source| ExperimentError::Checkpoint {
        path: path.display().to_string(),
        source,
    };
    let ckpt = checkpoint::decode(&bytes).map_err(wrap)?;
    let rollout = config.rollout_config()?;
    ckpt.verify(
        rollout.task.vocab_size,
        rollout.feature_dim(),
        config.config_hash(),
    )
    .map_err(wrap)?;
    Ok(ckpt.params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestOfNSummary {
    pub candidates: usize,
    pub mean_selected: f64,
    pub mean_random: f64,
    pub mean_difference: f64,
    pub std_error: f64,
    pub lower_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub config_hash: String,
    pub seed: u64,
    pub policy_version: u64,
    pub episodes: usize,
    pub candidates: usize,
    /// Over every rollout; `None` when nothing ran.
    pub mean_outcome: Option<f64>,
    /// Outcome of member 0 of each task.
    pub first_candidate_mean_outcome: Option<f64>,
    pub mean_belief_entropy: Vec<f64>,
    pub best_of_n: Option<BestOfNSummary>,
}

/// Rollouts of a frozen policy together with their summary.
pub fn evaluate_policy(
    params: &PolicyParameters,
    config: &ExperimentConfig,
) -> Result<(Vec<Vec<Trajectory>>, EvalSummary), ExperimentError> {
    let rollout = config.rollout_config()?;
    let streams = SeedStreams::new(config.seed);
    let groups = evaluate(
        params,
        &rollout,
        &streams,
        config.eval.episodes,
        config.eval.candidates,
    )?;
    let summary = summarize(&groups, config, params.version(), &rollout)?;
    Ok((groups, summary))
}

fn summarize(
    groups: &[Vec<Trajectory>],
    config: &ExperimentConfig,
    policy_version: u64,
    rollout: &RolloutConfig,
) -> Result<EvalSummary, ExperimentError> {
    let all: Vec<&Trajectory> = groups.iter().flatten().collect();
    let mean =
        |xs: &mut dyn Iterator<Item = f64>, n: usize| (n > 0).then(|| xs.sum::<f64>() / n as f64);
    let mut mean_be = vec![
        0.0;
        if all.is_empty() {
            0
        } else {
            rollout.task.num_turns
        }
    ];
    for t in &all {
        for (acc, be) in mean_be.iter_mut().zip(t.belief_entropies()) {
            *acc += be / all.len() as f64;
        }
    }
    let best_of_n = if config.eval.candidates > 1 && groups.len() >= 2 {
        let b = best_of_n_comparison(groups, CONFIDENCE)?;
        Some(BestOfNSummary {
            candidates: b.candidates,
            mean_selected: b.comparison.mean_a,
            mean_random: b.comparison.mean_b,
            mean_difference: b.comparison.mean_difference,
            std_error: b.comparison.std_error,
            lower_bound: b.comparison.lower_bound,
        })
    } else {
        None
    };
    Ok(EvalSummary {
        config_hash: config.config_hash_hex(),
        seed: config.seed,
        policy_version,
        episodes: groups.len(),
        candidates: config.eval.candidates,
        mean_outcome: mean(&mut all.iter().map(|t| t.outcome_reward), all.len()),
        first_candidate_mean_outcome: mean(
            &mut groups.iter().map(|g| g[0].outcome_reward),
            groups.len(),
        ),
        mean_belief_entropy: mean_be,
        best_of_n,
    })
}

/// Evaluates `checkpoint`, or the untrained policy for this seed when
/// `None`, and writes the trajectory log and summary.
pub fn run_eval(
    config: &ExperimentConfig,
    checkpoint: Option<&Path>,
) -> Result<EvalSummary, ExperimentError> {
    let started = SystemTime::now();
    let clock = Instant::now();
    config.validate()?;
    let params = match checkpoint {
        Some(path) => load_checkpoint(path, config)?,
        None => {
            let rollout = config.rollout_config()?;
            TrainerState::initialize(&config.trainer, &rollout, &SeedStreams::new(config.seed))?
                .params
        }
    };
    let (groups, summary) = evaluate_policy(&params, config)?;
    let out = &config.output_dir;
    write_json(&out.join("config.json"), config)?;
    let log_path = out.join("eval-trajectories.jsonl");
    let mut log = create(&log_path)?;
    let ctx = LogContext {
        iteration: None,
        seed: config.seed,
        config_hash: config.config_hash_hex(),
    };
    for traj in groups.iter().flatten() {
        let rec = TrajectoryLogRecord::from_trajectory(traj, &ctx, Vec::new());
        write_record(&mut log, &rec).map_err(io_err(&log_path))?;
    }
    log.flush().map_err(io_err(&log_path))?;
    write_json(&out.join("eval-summary.json"), &summary)?;
    write_manifest(config, "eval", started, clock)?;
    Ok(summary)
}

pub fn read_logs(paths: &[PathBuf]) -> Result<Vec<TrajectoryLogRecord>, ExperimentError> {
    let mut records = Vec::new();
    for path in paths {
        let file = File::open(path).map_err(io_err(path))?;
        records.extend(read_trajectory_log(BufReader::new(file)).map_err(|source| {
            ExperimentError::Log {
                path: path.display().to_string(),
                source,
            }
        })?);
    }
    Ok(records)
}

/// Which analysis tables were written.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalyzeSummary {
    pub records: usize,
    pub written: Vec<PathBuf>,
}

/// Runs every analysis on the given logs, writing each table that has
/// enough data. Returns the first analysis error after writing the rest.
pub fn run_analyze(
    config: &ExperimentConfig,
    logs: &[PathBuf],
) -> Result<AnalyzeSummary, ExperimentError> {
    let started = SystemTime::now();
    let clock = Instant::now();
    config.validate()?;
    let set = TrajectoryLogSet::new(read_logs(logs)?)?;
    let out = &config.output_dir;
    let mut summary = AnalyzeSummary {
        records: set.len(),
        written: Vec::new(),
    };
    let mut first_error: Option<AnalysisError> = None;
    let mut emit =
        |name: &str, table: Result<String, AnalysisError>| -> Result<(), ExperimentError> {
            match table {
                Ok(text) => {
                    let path = out.join(name);
                    write_file(&path, text.as_bytes())?;
                    summary.written.push(path);
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
            Ok(())
        };
    let stats = entropy_trajectory_stats(set.records(), config.eval.success_threshold);
    emit(
        "entropy-curves.tsv",
        stats
            .as_ref()
            .map(tables::entropy_curves)
            .map_err(Clone::clone),
    )?;
    emit(
        "entropy-slopes.tsv",
        stats
            .clone()
            .and_then(|s| Ok(tables::entropy_slopes(&s, &s.compare_slopes(CONFIDENCE)?))),
    )?;
    emit(
        "delta-be-correlation.tsv",
        delta_be_correlation(set.records()).map(|c| tables::delta_be_correlation(&c)),
    )?;
    let groups: Vec<Vec<&TrajectoryLogRecord>> = set
        .task_groups()
        .into_iter()
        .filter(|g| g.len() > 1)
        .collect();
    let best = if groups.is_empty() {
        Err(AnalysisError::InsufficientData {
            what: "tasks with several candidates".into(),
            needed: 1,
            found: 0,
        })
    } else {
        best_of_n_comparison(&groups, CONFIDENCE).map(|b| tables::best_of_n(&b))
    };
    emit("best-of-n.tsv", best)?;
    write_manifest(config, "analyze", started, clock)?;
    match first_error {
        Some(e) => Err(e.into()),
        None => Ok(summary),
    }
}

pub fn run_ablate(
    config: &ExperimentConfig,
) -> Result<analysis::ablation::AblationTable, ExperimentError> {
    let started = SystemTime::now();
    let clock = Instant::now();
    config.validate()?;
    let table = analysis::ablation::anchor_ablation(config)?;
    let out = &config.output_dir;
    write_json(&out.join("config.json"), config)?;
    write_file(
        &out.join("ablation.tsv"),
        tables::ablation(&table).as_bytes(),
    )?;
    write_file(
        &out.join("ablation-runs.tsv"),
        tables::ablation_runs(&table).as_bytes(),
    )?;
    write_manifest(config, "ablate", started, clock)?;
    Ok(table)
}
