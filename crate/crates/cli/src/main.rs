//! Command-line entry point: `beliefmem train|eval|analyze|ablate`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 internal invariant violation.

use std::path::PathBuf;
use std::process::ExitCode;

use beliefmem::experiment::{
    run_ablate, run_analyze, run_eval, run_train, ConfigError, ExperimentConfig, ExperimentError,
};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "beliefmem",
    version,
    about = "Belief-entropy shaped training of memory agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every available core.
    #[arg(long, default_value_t = 0)]
    parallelism: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a policy, writing metrics, trajectory logs and checkpoints.
    Train(Common),
    /// Roll out a frozen policy and summarize the results.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate; the untrained policy of the seed when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Belief-entropy analyses over trajectory logs.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Trajectory logs to read; defaults to `<out>/eval-trajectories.jsonl`.
        #[arg(long = "logs")]
        logs: Vec<PathBuf>,
    },
    /// Train and evaluate every anchor variant on shared seeds.
    Ablate(Common),
}

fn resolve(common: &Common) -> Result<ExperimentConfig, ExperimentError> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(common.parallelism)
        .build_global()
        .map_err(|e| ConfigError::Invalid {
            field: "--parallelism".into(),
            reason: e.to_string(),
        })?;
    Ok(config)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Train(common) => {
            let config = resolve(&common)?;
            let s = run_train(&config)?;
            println!(
                "trained {} iterations, final mean outcome {}, checkpoint {}",
                s.iterations,
                fmt_opt(s.final_mean_outcome),
                s.final_checkpoint.display()
            );
        }
        Command::Eval { common, checkpoint } => {
            let config = resolve(&common)?;
            let s = run_eval(&config, checkpoint.as_deref())?;
            println!(
                "evaluated {} tasks x {} candidates, mean outcome {}",
                s.episodes,
                s.candidates,
                fmt_opt(s.mean_outcome)
            );
            if let Some(b) = &s.best_of_n {
                println!(
                    "best-of-{}: selected {:.4} vs random {:.4} (lower 95% bound on difference {:.4})",
                    b.candidates, b.mean_selected, b.mean_random, b.lower_bound
                );
            }
        }
        Command::Analyze { common, logs } => {
            let config = resolve(&common)?;
            let logs = if logs.is_empty() {
                vec![config.output_dir.join("eval-trajectories.jsonl")]
            } else {
                logs
            };
            let s = run_analyze(&config, &logs)?;
            println!(
                "analyzed {} records, wrote {} tables",
                s.records,
                s.written.len()
            );
        }
        Command::Ablate(common) => {
            let config = resolve(&common)?;
            let t = run_ablate(&config)?;
            for r in &t.rows {
                println!(
                    "{:<14} seeds {} mean outcome {:.4}",
                    r.variant.name(),
                    r.seeds,
                    r.mean_outcome
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
