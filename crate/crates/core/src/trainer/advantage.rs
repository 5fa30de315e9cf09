//! Dense rewards and group-relative, turn-level advantages.
//!
//! ```text
//! R_k = α σ(−Ĥ(m_k)) + r_final
//! Â_k = (R_k − mean_i R_k) / std_i R_k        (population std)
//! A_t = (1 / (T − t + 1)) Σ_{k=t..T} Â_k
//! ```

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdvantageError {
    #[error("group of {0} trajectories; need at least 2")]
    GroupTooSmall(usize),
    #[error("ragged group: trajectory {index} has {actual} turns, expected {expected}")]
    Ragged {
        index: usize,
        expected: usize,
        actual: usize,
    },
}

/// `α / (1 + e^{be}) + outcome`.
pub fn sub_trajectory_reward(be_value: f64, outcome: f64, alpha: f64) -> f64 {
    // σ(−x) = 1 / (1 + eˣ); exp overflow to +∞ yields the 0 limit.
    alpha / (1.0 + be_value.exp()) + outcome
}

/// Standardizes rewards within a group. Groups with spread below
/// `std_floor` get all-zero advantages.
pub fn group_advantages(rewards: &[f64], std_floor: f64) -> Result<Vec<f64>, AdvantageError> {
    let g = rewards.len();
    if g < 2 {
        return Err(AdvantageError::GroupTooSmall(g));
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / g as f64;
    let std = var.sqrt();
    if std < std_floor {
        return Ok(vec![0.0; g]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Suffix means of each row.
pub fn turn_level_advantages(sub_advantages: &[Vec<f64>]) -> Vec<Vec<f64>> {
    sub_advantages
        .iter()
        .map(|row| {
            let t = row.len();
            let mut out = vec![0.0; t];
            let mut sum = 0.0;
            for k in (0..t).rev() {
                sum += row[k];
                out[k] = sum / (t - k) as f64;
            }
            out
        })
        .collect()
}

/// Rewards and advantages of one group, indexed `[member][turn]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageTable {
    pub rewards: Vec<Vec<f64>>,
    pub sub_advantages: Vec<Vec<f64>>,
    pub turn_advantages: Vec<Vec<f64>>,
}

impl AdvantageTable {
    /// Builds the table from per-turn belief entropies and final outcomes.
    pub fn build(
        belief_entropies: &[Vec<f64>],
        outcomes: &[f64],
        alpha: f64,
        std_floor: f64,
    ) -> Result<Self, AdvantageError> {
        let g = belief_entropies.len();
        assert_eq!(g, outcomes.len(), "one outcome per trajectory");
        if g < 2 {
            return Err(AdvantageError::GroupTooSmall(g));
        }
        let turns = belief_entropies[0].len();
        for (index, row) in belief_entropies.iter().enumerate() {
            if row.len() != turns {
                return Err(AdvantageError::Ragged {
                    index,
                    expected: turns,
                    actual: row.len(),
                });
            }
        }
        let rewards: Vec<Vec<f64>> = belief_entropies
            .iter()
            .zip(outcomes)
            .map(|(row, &r)| {
                row.iter()
                    .map(|&be| sub_trajectory_reward(be, r, alpha))
                    .collect()
            })
            .collect();
        let mut sub_advantages = vec![vec![0.0; turns]; g];
        for k in 0..turns {
            let column: Vec<f64> = rewards.iter().map(|row| row[k]).collect();
            for (i, a) in group_advantages(&column, std_floor)?
                .into_iter()
                .enumerate()
            {
                sub_advantages[i][k] = a;
            }
        }
        let turn_advantages = turn_level_advantages(&sub_advantages);
        Ok(Self {
            rewards,
            sub_advantages,
            turn_advantages,
        })
    }

    pub fn group_size(&self) -> usize {
        self.rewards.len()
    }
}
