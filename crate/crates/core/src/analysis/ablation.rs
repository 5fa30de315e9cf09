//! Anchor-question ablation: every variant trained and evaluated on the
//! same seeds.

use rayon::prelude::*;

use super::{delta_be_correlation, mean_and_std_error, Correlation};
use crate::agent::Trajectory;
use crate::experiment::{
    evaluate_policy, train_in_memory, AblationVariant, ExperimentConfig, ExperimentError,
};

/// One training run of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRun {
    pub variant: AblationVariant,
    pub seed: u64,
    /// Mean evaluation outcome of the trained policy.
    pub eval_outcome: f64,
    /// `None` when the evaluation had too little data or no variance.
    pub delta_be: Option<Correlation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub seeds: usize,
    pub mean_outcome: f64,
    pub outcome_std_error: f64,
    /// Over the evaluation trajectories of all seeds pooled.
    pub delta_be: Option<Correlation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    /// Variant-major, seeds ascending.
    pub runs: Vec<AblationRun>,
}

impl AblationTable {
    pub fn row(&self, variant: AblationVariant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }
}

/// Trains each configured variant on seeds `seed .. seed + num_seeds` and
/// evaluates one rollout per evaluation task. Runs execute in parallel;
/// results do not depend on scheduling.
pub fn anchor_ablation(config: &ExperimentConfig) -> Result<AblationTable, ExperimentError> {
    config.validate()?;
    let jobs: Vec<(AblationVariant, u64)> = config
        .ablation
        .variants
        .iter()
        .flat_map(|&v| {
            (0..config.ablation.num_seeds).map(move |i| (v, config.seed.wrapping_add(i)))
        })
        .collect();
    let results: Vec<(AblationRun, Vec<Trajectory>)> = jobs
        .par_iter()
        .map(|&(variant, seed)| {
            let mut cfg = variant.apply(config);
            cfg.seed = seed;
            cfg.eval.candidates = 1;
            let (state, _) = train_in_memory(&cfg, |_, _| Ok(()))?;
            let (groups, summary) = evaluate_policy(&state.params, &cfg)?;
            let trajectories: Vec<Trajectory> = groups.into_iter().flatten().collect();
            Ok((
                AblationRun {
                    variant,
                    seed,
                    eval_outcome: summary.mean_outcome.unwrap_or(f64::NAN),
                    delta_be: delta_be_correlation(&trajectories).ok().map(|c| c.raw),
                },
                trajectories,
            ))
        })
        .collect::<Result<_, ExperimentError>>()?;

    let mut rows = Vec::new();
    for &variant in &config.ablation.variants {
        let mine: Vec<&(AblationRun, Vec<Trajectory>)> = results
            .iter()
            .filter(|(r, _)| r.variant == variant)
            .collect();
        let outcomes: Vec<f64> = mine.iter().map(|(r, _)| r.eval_outcome).collect();
        let pooled: Vec<&Trajectory> = mine.iter().flat_map(|(_, t)| t).collect();
        let (mean_outcome, outcome_std_error) = mean_and_std_error(&outcomes);
        rows.push(AblationRow {
            variant,
            seeds: mine.len(),
            mean_outcome,
            outcome_std_error,
            delta_be: delta_be_correlation(&pooled).ok().map(|c| c.raw),
        });
    }
    Ok(AblationTable {
        rows,
        runs: results.into_iter().map(|(r, _)| r).collect(),
    })
}
