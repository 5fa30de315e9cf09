//! Exact finite POMDP machinery.
//!
//! The belief update is the standard Bayes filter
//!
//! ```text
//! b'(s') = η · O(o | s', a) · Σ_s T(s' | s, a) · b(s),     η⁻¹ = P(o | b, a)
//! ```
//!
//! All probabilities live in linear space; the state spaces here are small
//! enough that log-space bookkeeping buys nothing. Entropies are in nats.

mod enumerate;
pub mod format;
pub mod info;

pub use enumerate::{
    summary_induced_belief, EnumeratedHistory, HistorySpace, Summarizer, SummaryBelief,
    SummaryTable, DEFAULT_ENUMERATION_CAP,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for kernel rows and the initial belief.
pub const KERNEL_ROW_TOLERANCE: f64 = 1e-12;
/// Tolerance for belief vectors produced by filtering.
pub const BELIEF_TOLERANCE: f64 = 1e-10;
/// Observation probabilities below this are treated as impossible.
pub const LIKELIHOOD_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PomdpError {
    #[error("dimension `{0}` must be positive")]
    EmptyDimension(&'static str),
    #[error("`{what}` has {actual} entries, expected {expected}")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("`{what}` entry {index} is {value}, expected a finite non-negative number")]
    BadEntry {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("{row} sums to {sum}, expected 1")]
    RowSum { row: String, sum: f64 },
    #[error("discount {0} outside (0, 1]")]
    Discount(f64),
    #[error("action {action} out of range ({num_actions} actions)")]
    ActionOutOfRange { action: usize, num_actions: usize },
    #[error("observation {obs} out of range ({num_observations} observations)")]
    ObservationOutOfRange { obs: usize, num_observations: usize },
    #[error("belief has {actual} states, model has {expected}")]
    BeliefDimension { expected: usize, actual: usize },
    #[error("observation {obs} has predicted probability {probability:e} under the prior")]
    ZeroLikelihood { obs: usize, probability: f64 },
    #[error("history has {actions} actions but {observations} observations")]
    MalformedHistory { actions: usize, observations: usize },
    #[error("enumeration needs {cells} joint cells, cap is {cap}")]
    EnumerationTooLarge { cells: u128, cap: u64 },
    #[error("summarizer output for a history is not a distribution: {0}")]
    InvalidSummarizer(String),
}

pub type Result<T> = std::result::Result<T, PomdpError>;

/// A finite POMDP `⟨S, A, Ω, T, O, R, γ⟩` with an initial belief.
///
/// `transition` is row-major over `(s, a, s')` and `observation` over
/// `(s', a, o)`; `reward` is indexed `(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePomdp {
    num_states: usize,
    num_actions: usize,
    num_observations: usize,
    transition: Vec<f64>,
    observation: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
    initial_belief: Vec<f64>,
}

fn check_entries(what: &'static str, values: &[f64], expected: usize) -> Result<()> {
    if values.len() != expected {
        return Err(PomdpError::Shape {
            what,
            expected,
            actual: values.len(),
        });
    }
    if let Some((index, &value)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(PomdpError::BadEntry { what, index, value });
    }
    Ok(())
}

impl DiscretePomdp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        num_actions: usize,
        num_observations: usize,
        transition: Vec<f64>,
        observation: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        initial_belief: Vec<f64>,
    ) -> Result<Self> {
        for (name, n) in [
            ("num_states", num_states),
            ("num_actions", num_actions),
            ("num_observations", num_observations),
        ] {
            if n == 0 {
                return Err(PomdpError::EmptyDimension(name));
            }
        }
        let (s, a, o) = (num_states, num_actions, num_observations);
        check_entries("transition", &transition, s * a * s)?;
        check_entries("observation", &observation, s * a * o)?;
        check_entries("initial_belief", &initial_belief, s)?;
        if reward.len() != s * a {
            return Err(PomdpError::Shape {
                what: "reward",
                expected: s * a,
                actual: reward.len(),
            });
        }
        if let Some((index, &value)) = reward.iter().enumerate().find(|(_, r)| !r.is_finite()) {
            return Err(PomdpError::BadEntry {
                what: "reward",
                index,
                value,
            });
        }
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(PomdpError::Discount(discount));
        }
        for (row, chunk) in transition.chunks(s).enumerate() {
            let sum: f64 = chunk.iter().sum();
            if (sum - 1.0).abs() > KERNEL_ROW_TOLERANCE {
                return Err(PomdpError::RowSum {
                    row: format!("transition row (s={}, a={})", row / a, row % a),
                    sum,
                });
            }
        }
        for (row, chunk) in observation.chunks(o).enumerate() {
            let sum: f64 = chunk.iter().sum();
            if (sum - 1.0).abs() > KERNEL_ROW_TOLERANCE {
                return Err(PomdpError::RowSum {
                    row: format!("observation row (s'={}, a={})", row / a, row % a),
                    sum,
                });
            }
        }
        let sum: f64 = initial_belief.iter().sum();
        if (sum - 1.0).abs() > KERNEL_ROW_TOLERANCE {
            return Err(PomdpError::RowSum {
                row: "initial_belief".to_string(),
                sum,
            });
        }
        Ok(Self {
            num_states,
            num_actions,
            num_observations,
            transition,
            observation,
            reward,
            discount,
            initial_belief,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_observations(&self) -> usize {
        self.num_observations
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// `T(s' | s, a)`.
    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.num_actions + a) * self.num_states + next]
    }

    /// `O(o | s', a)`.
    pub fn observation(&self, next: usize, a: usize, o: usize) -> f64 {
        self.observation[(next * self.num_actions + a) * self.num_observations + o]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    pub fn transition_table(&self) -> &[f64] {
        &self.transition
    }

    pub fn observation_table(&self) -> &[f64] {
        &self.observation
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    pub fn initial_belief(&self) -> BeliefState {
        BeliefState {
            probs: self.initial_belief.clone(),
        }
    }

    fn check_action(&self, action: usize) -> Result<()> {
        if action >= self.num_actions {
            return Err(PomdpError::ActionOutOfRange {
                action,
                num_actions: self.num_actions,
            });
        }
        Ok(())
    }

    fn check_observation(&self, obs: usize) -> Result<()> {
        if obs >= self.num_observations {
            return Err(PomdpError::ObservationOutOfRange {
                obs,
                num_observations: self.num_observations,
            });
        }
        Ok(())
    }
}

/// A probability vector over hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    probs: Vec<f64>,
}

impl BeliefState {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_entries("belief", &probs, probs.len())?;
        let sum: f64 = probs.iter().sum();
        if probs.is_empty() || (sum - 1.0).abs() > BELIEF_TOLERANCE {
            return Err(PomdpError::RowSum {
                row: "belief".to_string(),
                sum,
            });
        }
        Ok(Self { probs })
    }

    pub fn uniform(num_states: usize) -> Self {
        Self {
            probs: vec![1.0 / num_states as f64; num_states],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn entropy(&self) -> f64 {
        info::entropy(&self.probs)
    }

    /// Builds a belief from unnormalized non-negative mass without validation.
    pub(crate) fn from_unnormalized(mass: Vec<f64>, total: f64) -> Self {
        Self {
            probs: mass.into_iter().map(|m| m / total).collect(),
        }
    }
}

/// An interaction history as a sequence of `(action, observation)` steps:
/// action `a_k` is taken, the state transitions, then `o_k` is observed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HistoryRecord {
    actions: Vec<usize>,
    observations: Vec<usize>,
}

impl HistoryRecord {
    pub fn new(actions: Vec<usize>, observations: Vec<usize>) -> Result<Self> {
        if actions.len() != observations.len() {
            return Err(PomdpError::MalformedHistory {
                actions: actions.len(),
                observations: observations.len(),
            });
        }
        Ok(Self {
            actions,
            observations,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn push(&mut self, action: usize, obs: usize) {
        self.actions.push(action);
        self.observations.push(obs);
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn observations(&self) -> &[usize] {
        &self.observations
    }

    pub fn steps(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.actions
            .iter()
            .copied()
            .zip(self.observations.iter().copied())
    }
}

/// Result of one filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefUpdate {
    pub belief: BeliefState,
    /// `P(o | prior, a)`, the inverse of the normalizer.
    pub observation_probability: f64,
}

pub fn belief_update(
    pomdp: &DiscretePomdp,
    prior: &BeliefState,
    action: usize,
    obs: usize,
) -> Result<BeliefUpdate> {
    pomdp.check_action(action)?;
    pomdp.check_observation(obs)?;
    let n = pomdp.num_states();
    if prior.len() != n {
        return Err(PomdpError::BeliefDimension {
            expected: n,
            actual: prior.len(),
        });
    }
    let mut mass = vec![0.0; n];
    for (next, slot) in mass.iter_mut().enumerate() {
        let predicted: f64 = prior
            .probs()
            .iter()
            .enumerate()
            .map(|(s, &p)| pomdp.transition(s, action, next) * p)
            .sum();
        *slot = pomdp.observation(next, action, obs) * predicted;
    }
    let total: f64 = mass.iter().sum();
    if total < LIKELIHOOD_FLOOR {
        return Err(PomdpError::ZeroLikelihood {
            obs,
            probability: total,
        });
    }
    Ok(BeliefUpdate {
        belief: BeliefState::from_unnormalized(mass, total),
        observation_probability: total,
    })
}

/// Folds [`belief_update`] over a history starting from the initial belief.
pub fn posterior_given_history(
    pomdp: &DiscretePomdp,
    history: &HistoryRecord,
) -> Result<BeliefState> {
    history
        .steps()
        .try_fold(pomdp.initial_belief(), |belief, (a, o)| {
            belief_update(pomdp, &belief, a, o).map(|u| u.belief)
        })
}


#[cfg(test)]
mod tests {
    use super::fixtures::two_state;
    use super::*;

    #[test]
    fn revealing_observation_collapses_belief() {
        let pomdp = DiscretePomdp::new(
            2,
            1,
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
            1.0,
            vec![0.5, 0.5],
        )
        .unwrap();
        let u = belief_update(&pomdp, &BeliefState::uniform(2), 0, 0).unwrap();
        assert_eq!(u.belief.probs(), &[1.0, 0.0]);
        assert_eq!(u.observation_probability, 0.5);
    }

    #[test]
    fn uninformative_observation_only_propagates() {
        let t = vec![0.9, 0.1, 0.2, 0.8];
        let pomdp = DiscretePomdp::new(
            2,
            1,
            3,
            t,
            vec![1.0 / 3.0; 6],
            vec![0.0; 2],
            1.0,
            vec![0.6, 0.4],
        )
        .unwrap();
        for obs in 0..3 {
            let u = belief_update(&pomdp, &pomdp.initial_belief(), 0, obs).unwrap();
            let expected = [0.6 * 0.9 + 0.4 * 0.2, 0.6 * 0.1 + 0.4 * 0.8];
            for (got, want) in u.belief.probs().iter().zip(expected) {
                assert!((got - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_state_regression_value() {
        // predicted = (0.62, 0.38); unnormalized = (0.434, 0.152); P(o) = 0.586
        let pomdp = two_state();
        let u = belief_update(&pomdp, &pomdp.initial_belief(), 0, 0).unwrap();
        assert!((u.observation_probability - 0.586).abs() < 1e-15);
        assert!((u.belief.probs()[0] - 0.434 / 0.586).abs() < 1e-15);
        assert!((u.belief.probs()[1] - 0.152 / 0.586).abs() < 1e-15);
        assert!((u.belief.probs()[0] - 0.740_614_334_470_989_8).abs() < 1e-15);
    }

    #[test]
    fn impossible_observation_is_reported() {
        let pomdp = DiscretePomdp::new(
            2,
            1,
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
            1.0,
            vec![1.0, 0.0],
        )
        .unwrap();
        let err = belief_update(&pomdp, &pomdp.initial_belief(), 0, 1).unwrap_err();
        assert!(matches!(err, PomdpError::ZeroLikelihood { obs: 1, .. }));
        let history = HistoryRecord::new(vec![0, 0], vec![0, 1]).unwrap();
        assert!(matches!(
            posterior_given_history(&pomdp, &history),
            Err(PomdpError::ZeroLikelihood { .. })
        ));
    }

    #[test]
    fn out_of_range_ids() {
        let pomdp = two_state();
        let b = pomdp.initial_belief();
        assert!(matches!(
            belief_update(&pomdp, &b, 1, 0),
            Err(PomdpError::ActionOutOfRange { .. })
        ));
        assert!(matches!(
            belief_update(&pomdp, &b, 0, 2),
            Err(PomdpError::ObservationOutOfRange { .. })
        ));
    }

    #[test]
    fn posterior_fold_base_cases() {
        let pomdp = two_state();
        let empty = posterior_given_history(&pomdp, &HistoryRecord::empty()).unwrap();
        assert_eq!(empty, pomdp.initial_belief());
        let one = HistoryRecord::new(vec![0], vec![1]).unwrap();
        let direct = belief_update(&pomdp, &pomdp.initial_belief(), 0, 1)
            .unwrap()
            .belief;
        assert_eq!(posterior_given_history(&pomdp, &one).unwrap(), direct);
    }

    #[test]
    fn constructor_rejects_bad_rows() {
        let err = DiscretePomdp::new(
            2,
            1,
            2,
            vec![0.9, 0.1, 0.3, 0.8],
            vec![0.7, 0.3, 0.4, 0.6],
            vec![0.0; 2],
            0.9,
            vec![0.5, 0.5],
        )
        .unwrap_err();
        assert!(matches!(err, PomdpError::RowSum { ref row, .. } if row.contains("s=1")));
        let err = DiscretePomdp::new(
            2,
            1,
            2,
            vec![0.9, 0.1, 0.2, 0.8],
            vec![0.7, 0.3, 0.4, 0.6],
            vec![0.0; 2],
            0.0,
            vec![0.5, 0.5],
        )
        .unwrap_err();
        assert_eq!(err, PomdpError::Discount(0.0));
    }
}
