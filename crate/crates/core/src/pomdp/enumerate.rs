//! Exhaustive history enumeration and the summary-induced belief
//!
//! ```text
//! P(s | m) = Σ_h P(s | h) · P(h | m)
//! ```
//!
//! Actions are drawn open-loop from a fixed distribution, independent of the
//! hidden state, so `P(s | h)` is exactly the filtered posterior.

use std::collections::{BTreeMap, HashMap};

use super::info::JointTable;
use super::{BeliefState, DiscretePomdp, HistoryRecord, PomdpError, Result, LIKELIHOOD_FLOOR};

/// Default cap on `(A·Ω)^horizon · S` joint cells.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// One reachable history with its probability and posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedHistory {
    pub history: HistoryRecord,
    pub probability: f64,
    pub posterior: BeliefState,
}

/// Every history of a fixed length with nonzero probability.
#[derive(Debug, Clone)]
pub struct HistorySpace {
    num_states: usize,
    histories: Vec<EnumeratedHistory>,
}

impl HistorySpace {
    /// Enumerates all `(action, observation)` sequences of length `horizon`.
    ///
    /// The forward messages `α(s) = P(s_t = s, o_{1:t} | a_{1:t})` are carried
    /// unnormalized along each branch; impossible branches are pruned.
    pub fn enumerate(
        pomdp: &DiscretePomdp,
        horizon: usize,
        action_probs: &[f64],
        cap: u64,
    ) -> Result<Self> {
        let (s, a, o) = (
            pomdp.num_states(),
            pomdp.num_actions(),
            pomdp.num_observations(),
        );
        if action_probs.len() != a {
            return Err(PomdpError::Shape {
                what: "action_probs",
                expected: a,
                actual: action_probs.len(),
            });
        }
        let cells = (0..horizon)
            .try_fold(s as u128, |acc, _| acc.checked_mul((a * o) as u128))
            .unwrap_or(u128::MAX);
        if cells > cap as u128 {
            return Err(PomdpError::EnumerationTooLarge { cells, cap });
        }
        let mut histories = Vec::new();
        let alpha = pomdp.initial_belief().probs().to_vec();
        let mut history = HistoryRecord::empty();
        expand(
            pomdp,
            action_probs,
            horizon,
            &mut history,
            1.0,
            alpha,
            &mut histories,
        );
        Ok(Self {
            num_states: s,
            histories,
        })
    }

    /// Uniform open-loop action distribution.
    pub fn enumerate_uniform(pomdp: &DiscretePomdp, horizon: usize, cap: u64) -> Result<Self> {
        let a = pomdp.num_actions();
        Self::enumerate(pomdp, horizon, &vec![1.0 / a as f64; a], cap)
    }

    pub fn histories(&self) -> &[EnumeratedHistory] {
        &self.histories
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// `P(s, h)` with histories along columns.
    pub fn state_history_joint(&self) -> JointTable {
        let n = self.histories.len();
        let mut probs = vec![0.0; self.num_states * n];
        for (c, h) in self.histories.iter().enumerate() {
            for (r, &p) in h.posterior.probs().iter().enumerate() {
                probs[r * n + c] = p * h.probability;
            }
        }
        JointTable::new(self.num_states, n, probs)
            .expect("enumerated history probabilities form a distribution")
    }

    /// Marginal state distribution at the horizon.
    pub fn state_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_states];
        for h in &self.histories {
            for (slot, &p) in out.iter_mut().zip(h.posterior.probs()) {
                *slot += p * h.probability;
            }
        }
        out
    }
}

fn expand(
    pomdp: &DiscretePomdp,
    action_probs: &[f64],
    remaining: usize,
    history: &mut HistoryRecord,
    action_mass: f64,
    alpha: Vec<f64>,
    out: &mut Vec<EnumeratedHistory>,
) {
    let total: f64 = alpha.iter().sum();
    if remaining == 0 {
        out.push(EnumeratedHistory {
            history: history.clone(),
            probability: action_mass * total,
            posterior: BeliefState::from_unnormalized(alpha, total),
        });
        return;
    }
    let n = pomdp.num_states();
    for (a, &pa) in action_probs.iter().enumerate() {
        if pa <= 0.0 {
            continue;
        }
        let predicted: Vec<f64> = (0..n)
            .map(|next| {
                (0..n)
                    .map(|s| alpha[s] * pomdp.transition(s, a, next))
                    .sum()
            })
            .collect();
        for o in 0..pomdp.num_observations() {
            let next_alpha: Vec<f64> = predicted
                .iter()
                .enumerate()
                .map(|(next, &p)| p * pomdp.observation(next, a, o))
                .collect();
            if next_alpha.iter().sum::<f64>() < LIKELIHOOD_FLOOR {
                continue;
            }
            history.push(a, o);
            expand(
                pomdp,
                action_probs,
                remaining - 1,
                history,
                action_mass * pa,
                next_alpha,
                out,
            );
            history.actions.pop();
            history.observations.pop();
        }
    }
}

/// A memory summarizer `P(m | h)`.
///
/// Any `Fn(&HistoryRecord) -> usize` is a deterministic summarizer;
/// [`SummaryTable`] holds explicit stochastic kernels.
pub trait Summarizer {
    /// Sparse `P(m | h)` as `(summary id, probability)` pairs.
    fn summarize(&self, history: &HistoryRecord) -> Vec<(usize, f64)>;
}

impl<F> Summarizer for F
where
    F: Fn(&HistoryRecord) -> usize,
{
    fn summarize(&self, history: &HistoryRecord) -> Vec<(usize, f64)> {
        vec![(self(history), 1.0)]
    }
}

/// Explicit stochastic summarizer; histories missing from the table map to
/// summary `default_summary` with probability one.
#[derive(Debug, Clone, Default)]
pub struct SummaryTable {
    rows: HashMap<HistoryRecord, Vec<(usize, f64)>>,
    default_summary: usize,
}

impl SummaryTable {
    pub fn new(default_summary: usize) -> Self {
        Self {
            rows: HashMap::new(),
            default_summary,
        }
    }

    pub fn insert(&mut self, history: HistoryRecord, dist: Vec<(usize, f64)>) {
        self.rows.insert(history, dist);
    }
}

impl Summarizer for SummaryTable {
    fn summarize(&self, history: &HistoryRecord) -> Vec<(usize, f64)> {
        self.rows
            .get(history)
            .cloned()
            .unwrap_or_else(|| vec![(self.default_summary, 1.0)])
    }
}

/// Beliefs induced by each reachable summary.
#[derive(Debug, Clone)]
pub struct SummaryBelief {
    /// Reachable summary ids in ascending order.
    pub summaries: Vec<usize>,
    /// `P(s | m)` for each entry of `summaries`.
    pub beliefs: Vec<BeliefState>,
    /// `P(m)` for each entry of `summaries`.
    pub summary_probs: Vec<f64>,
    /// `P(s, m)` with summaries along columns in the order of `summaries`.
    pub joint: JointTable,
}

impl SummaryBelief {
    pub fn belief_for(&self, summary: usize) -> Option<&BeliefState> {
        self.summaries
            .binary_search(&summary)
            .ok()
            .map(|i| &self.beliefs[i])
    }
}

/// Computes `b^M(s) = Σ_h P(s | h) P(h | m)` for every reachable summary.
pub fn summary_induced_belief(
    space: &HistorySpace,
    summarizer: &dyn Summarizer,
) -> Result<SummaryBelief> {
    // P(m) and Σ_h P(s|h) P(m|h) P(h), accumulated per summary id.
    let mut mass: BTreeMap<usize, (f64, Vec<f64>)> = BTreeMap::new();
    let s = space.num_states();
    for h in space.histories() {
        let dist = summarizer.summarize(&h.history);
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        if dist.iter().any(|(_, p)| !p.is_finite() || *p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(PomdpError::InvalidSummarizer(format!(
                "P(m | h) sums to {total} for history {:?}",
                h.history
            )));
        }
        for (m, pm_h) in dist {
            if pm_h == 0.0 {
                continue;
            }
            let weight = pm_h * h.probability;
            let entry = mass.entry(m).or_insert_with(|| (0.0, vec![0.0; s]));
            entry.0 += weight;
            for (slot, &ps) in entry.1.iter_mut().zip(h.posterior.probs()) {
                *slot += ps * weight;
            }
        }
    }
    let mass: Vec<(usize, (f64, Vec<f64>))> =
        mass.into_iter().filter(|(_, (pm, _))| *pm > 0.0).collect();
    let summaries: Vec<usize> = mass.iter().map(|(m, _)| *m).collect();
    let summary_probs: Vec<f64> = mass.iter().map(|(_, (pm, _))| *pm).collect();
    let beliefs: Vec<BeliefState> = mass
        .iter()
        .map(|(_, (pm, acc))| BeliefState::from_unnormalized(acc.clone(), *pm))
        .collect();
    let cols = summaries.len();
    let mut probs = vec![0.0; s * cols];
    for (c, (_, (_, acc))) in mass.iter().enumerate() {
        for (r, &v) in acc.iter().enumerate() {
            probs[r * cols + c] = v;
        }
    }
    let joint = JointTable::new(s, cols, probs).map_err(|e| {
        PomdpError::InvalidSummarizer(format!("summary joint is not a distribution: {e}"))
    })?;
    Ok(SummaryBelief {
        summaries,
        beliefs,
        summary_probs,
        joint,
    })
}
