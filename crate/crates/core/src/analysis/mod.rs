//! Statistics over trajectory logs: belief-entropy curves for successful and
//! failed episodes, correlation of entropy reduction with outcome, and
//! best-of-N selection by final belief entropy.

pub mod ablation;
pub mod tables;

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::agent::log::TrajectoryLogRecord;
use crate::agent::Trajectory;

/// Smallest group accepted by the curve and correlation analyses.
pub const MIN_GROUP_SIZE: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("insufficient data for {what}: need {needed}, have {found}")]
    InsufficientData {
        what: String,
        needed: usize,
        found: usize,
    },
    #[error("zero variance in {0}")]
    DegenerateVariance(&'static str),
    #[error("log set mixes config hashes {first} and {other}")]
    MixedConfig { first: String, other: String },
    #[error("record {index} has {found} turns, expected {expected}")]
    RaggedTurns {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("confidence {0} outside (0, 1)")]
    Confidence(f64),
}

fn insufficient(what: &str, needed: usize, found: usize) -> AnalysisError {
    AnalysisError::InsufficientData {
        what: what.to_string(),
        needed,
        found,
    }
}

/// Trajectory summaries sharing one config hash.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLogSet {
    records: Vec<TrajectoryLogRecord>,
}

impl TrajectoryLogSet {
    pub fn new(records: Vec<TrajectoryLogRecord>) -> Result<Self, AnalysisError> {
        if let Some(first) = records.first() {
            if let Some(other) = records.iter().find(|r| r.config_hash != first.config_hash) {
                return Err(AnalysisError::MixedConfig {
                    first: first.config_hash.clone(),
                    other: other.config_hash.clone(),
                });
            }
        }
        Ok(Self { records })
    }

    /// A set that deliberately mixes configurations.
    pub fn comparing(records: Vec<TrajectoryLogRecord>) -> Self {
        Self { records }
    }

    pub fn records(&self) -> &[TrajectoryLogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records grouped by `(config_hash, seed, iteration, task_id)` in that
    /// order, members ascending within each group.
    pub fn task_groups(&self) -> Vec<Vec<&TrajectoryLogRecord>> {
        let mut sorted: Vec<&TrajectoryLogRecord> = self.records.iter().collect();
        let key = |r: &TrajectoryLogRecord| (r.config_hash.clone(), r.seed, r.iteration, r.task_id);
        sorted.sort_by(|a, b| key(a).cmp(&key(b)).then(a.member.cmp(&b.member)));
        let mut groups: Vec<Vec<&TrajectoryLogRecord>> = Vec::new();
        for r in sorted {
            match groups.last_mut() {
                Some(g) if key(g[0]) == key(r) => g.push(r),
                _ => groups.push(vec![r]),
            }
        }
        groups
    }
}

/// Anything with per-turn belief entropies and an outcome.
pub trait ScoredEpisode {
    fn belief_entropies(&self) -> Vec<f64>;
    fn outcome(&self) -> f64;

    fn final_belief_entropy(&self) -> Option<f64> {
        self.belief_entropies().last().copied()
    }
}

impl ScoredEpisode for TrajectoryLogRecord {
    fn belief_entropies(&self) -> Vec<f64> {
        self.belief_entropy.clone()
    }

    fn outcome(&self) -> f64 {
        self.outcome_reward
    }
}

impl ScoredEpisode for Trajectory {
    fn belief_entropies(&self) -> Vec<f64> {
        Trajectory::belief_entropies(self)
    }

    fn outcome(&self) -> f64 {
        self.outcome_reward
    }
}

impl<T: ScoredEpisode> ScoredEpisode for &T {
    fn belief_entropies(&self) -> Vec<f64> {
        (*self).belief_entropies()
    }

    fn outcome(&self) -> f64 {
        (*self).outcome()
    }
}

/// Sample mean and its standard error (`s / √n`, `s` with `n − 1`).
pub fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares slope of `ys` against turn index `1..=len`; 0 for one point.
pub fn turn_slope(ys: &[f64]) -> f64 {
    let n = ys.len();
    if n < 2 {
        return 0.0;
    }
    let x_mean = (n as f64 + 1.0) / 2.0;
    let y_mean = ys.iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, &y) in ys.iter().enumerate() {
        let dx = (i + 1) as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    sxy / sxx
}

fn t_quantile(confidence: f64, df: f64) -> Result<f64, AnalysisError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(AnalysisError::Confidence(confidence));
    }
    Ok(StudentsT::new(0.0, 1.0, df)
        .expect("positive degrees of freedom")
        .inverse_cdf(confidence))
}

/// Belief-entropy curve of one outcome group.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveStats {
    pub count: usize,
    pub mean_be: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Mean over trajectories of the per-trajectory slope; equals the slope
    /// of the mean curve.
    pub slope: f64,
    pub slope_std_error: f64,
}

impl CurveStats {
    fn from_rows(rows: &[Vec<f64>]) -> Self {
        let turns = rows.first().map_or(0, Vec::len);
        let mut mean_be = Vec::with_capacity(turns);
        let mut std_error = Vec::with_capacity(turns);
        for t in 0..turns {
            let column: Vec<f64> = rows.iter().map(|r| r[t]).collect();
            let (m, se) = mean_and_std_error(&column);
            mean_be.push(m);
            std_error.push(se);
        }
        let slopes: Vec<f64> = rows.iter().map(|r| turn_slope(r)).collect();
        let (slope, slope_std_error) = mean_and_std_error(&slopes);
        Self {
            count: rows.len(),
            mean_be,
            std_error,
            slope,
            slope_std_error,
        }
    }
}

/// One-sided confidence bounds on the two curve slopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeComparison {
    pub confidence: f64,
    /// Upper bound on the success-group slope.
    pub success_slope_upper: f64,
    /// `failure.slope − success.slope`.
    pub difference: f64,
    pub difference_std_error: f64,
    /// Lower bound on `difference`.
    pub difference_lower: f64,
}

impl SlopeComparison {
    /// Success slope below zero and failure slope at least the success slope,
    /// both at the stated confidence.
    pub fn holds(&self) -> bool {
        self.success_slope_upper < 0.0 && self.difference_lower >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyTrajectoryStats {
    pub success_threshold: f64,
    pub success: CurveStats,
    pub failure: CurveStats,
}

impl EntropyTrajectoryStats {
    /// Student-t bounds; the difference uses Welch's degrees of freedom.
    pub fn compare_slopes(&self, confidence: f64) -> Result<SlopeComparison, AnalysisError> {
        let (s, f) = (&self.success, &self.failure);
        let upper = s.slope + t_quantile(confidence, (s.count - 1) as f64)? * s.slope_std_error;
        let vs = s.slope_std_error.powi(2);
        let vf = f.slope_std_error.powi(2);
        let se = (vs + vf).sqrt();
        let df = if vs + vf > 0.0 {
            (vs + vf).powi(2) / (vs * vs / (s.count - 1) as f64 + vf * vf / (f.count - 1) as f64)
        } else {
            (s.count + f.count - 2) as f64
        };
        let difference = f.slope - s.slope;
        Ok(SlopeComparison {
            confidence,
            success_slope_upper: upper,
            difference,
            difference_std_error: se,
            difference_lower: difference - t_quantile(confidence, df)? * se,
        })
    }
}

fn check_turns<T: ScoredEpisode>(episodes: &[T]) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let rows: Vec<Vec<f64>> = episodes.iter().map(|e| e.belief_entropies()).collect();
    let expected = rows.first().map_or(0, Vec::len);
    for (index, row) in rows.iter().enumerate() {
        if row.len() != expected {
            return Err(AnalysisError::RaggedTurns {
                index,
                expected,
                found: row.len(),
            });
        }
    }
    Ok(rows)
}

/// Splits episodes by `outcome ≥ success_threshold` and summarizes each
/// group's belief-entropy curve.
pub fn entropy_trajectory_stats<T: ScoredEpisode>(
    episodes: &[T],
    success_threshold: f64,
) -> Result<EntropyTrajectoryStats, AnalysisError> {
    let rows = check_turns(episodes)?;
    let (mut success, mut failure) = (Vec::new(), Vec::new());
    for (e, row) in episodes.iter().zip(rows) {
        if e.outcome() >= success_threshold {
            success.push(row);
        } else {
            failure.push(row);
        }
    }
    if success.len() < MIN_GROUP_SIZE {
        return Err(insufficient("success group", MIN_GROUP_SIZE, success.len()));
    }
    if failure.len() < MIN_GROUP_SIZE {
        return Err(insufficient("failure group", MIN_GROUP_SIZE, failure.len()));
    }
    Ok(EntropyTrajectoryStats {
        success_threshold,
        success: CurveStats::from_rows(&success),
        failure: CurveStats::from_rows(&failure),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub n: usize,
    pub r: f64,
    pub t_statistic: f64,
    /// Two-sided, Student t with `n − 2` degrees of freedom.
    pub p_value: f64,
}

/// Pearson correlation with its two-sided p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation, AnalysisError> {
    assert_eq!(x.len(), y.len(), "paired samples");
    let n = x.len();
    if n < 3 {
        return Err(insufficient("correlation", 3, n));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(AnalysisError::DegenerateVariance("first variable"));
    }
    if syy == 0.0 {
        return Err(AnalysisError::DegenerateVariance("second variable"));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let (t_statistic, p_value) = if r.abs() == 1.0 {
        (f64::INFINITY.copysign(r), 0.0)
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        (t, (2.0 * dist.sf(t.abs())).min(1.0))
    };
    Ok(Correlation {
        n,
        r,
        t_statistic,
        p_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaBeCorrelation {
    /// Reduction `BE(turn 1) − BE(turn T)` against outcome.
    pub raw: Correlation,
    /// The same reduction divided by `T − 1` (by 1 when `T = 1`).
    pub per_turn: Correlation,
}

/// Correlation between belief-entropy reduction and outcome.
pub fn delta_be_correlation<T: ScoredEpisode>(
    episodes: &[T],
) -> Result<DeltaBeCorrelation, AnalysisError> {
    if episodes.len() < MIN_GROUP_SIZE {
        return Err(insufficient("correlation", MIN_GROUP_SIZE, episodes.len()));
    }
    let mut raw = Vec::with_capacity(episodes.len());
    let mut per_turn = Vec::with_capacity(episodes.len());
    let mut outcome = Vec::with_capacity(episodes.len());
    for e in episodes {
        let be = e.belief_entropies();
        let (Some(first), Some(last)) = (be.first(), be.last()) else {
            return Err(insufficient("belief entropy turns", 1, 0));
        };
        raw.push(first - last);
        per_turn.push((first - last) / (be.len().max(2) - 1) as f64);
        outcome.push(e.outcome());
    }
    Ok(DeltaBeCorrelation {
        raw: pearson(&raw, &outcome)?,
        per_turn: pearson(&per_turn, &outcome)?,
    })
}

/// Index of the candidate with the lowest final belief entropy; ties go to
/// the earliest. `None` for an empty slice or a candidate without turns.
pub fn best_of_n_select<T: ScoredEpisode>(candidates: &[T]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let be = c.final_belief_entropy()?;
        if best.is_none_or(|(_, b)| be < b) {
            best = Some((i, be));
        }
    }
    best.map(|(i, _)| i)
}

/// Paired mean difference `a − b` with a one-sided lower confidence bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedComparison {
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_difference: f64,
    pub std_error: f64,
    pub confidence: f64,
    /// Student-t lower bound on the mean difference.
    pub lower_bound: f64,
}

impl PairedComparison {
    /// `a ≥ b` at the stated confidence.
    pub fn a_not_worse(&self) -> bool {
        self.lower_bound >= 0.0
    }
}

pub fn paired_comparison(
    a: &[f64],
    b: &[f64],
    confidence: f64,
) -> Result<PairedComparison, AnalysisError> {
    assert_eq!(a.len(), b.len(), "paired samples");
    let n = a.len();
    if n < 2 {
        return Err(insufficient("paired comparison", 2, n));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean_difference, std_error) = mean_and_std_error(&diffs);
    let q = t_quantile(confidence, (n - 1) as f64)?;
    Ok(PairedComparison {
        n,
        mean_a: a.iter().sum::<f64>() / n as f64,
        mean_b: b.iter().sum::<f64>() / n as f64,
        mean_difference,
        std_error,
        confidence,
        lower_bound: mean_difference - q * std_error,
    })
}

/// Best-of-N selection against a uniformly random pick, per task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestOfN {
    pub tasks: usize,
    pub candidates: usize,
    /// `a` = outcome of the selected candidate, `b` = mean outcome over the
    /// task's candidates (the exact expectation of a uniform pick).
    pub comparison: PairedComparison,
}

pub fn best_of_n_comparison<T: ScoredEpisode>(
    groups: &[Vec<T>],
    confidence: f64,
) -> Result<BestOfN, AnalysisError> {
    let mut selected = Vec::with_capacity(groups.len());
    let mut random = Vec::with_capacity(groups.len());
    let candidates = groups.first().map_or(0, Vec::len);
    for g in groups {
        if g.len() != candidates {
            return Err(AnalysisError::InsufficientData {
                what: "candidates per task".into(),
                needed: candidates,
                found: g.len(),
            });
        }
        let Some(i) = best_of_n_select(g) else {
            return Err(insufficient("candidates per task", 1, 0));
        };
        selected.push(g[i].outcome());
        random.push(g.iter().map(|c| c.outcome()).sum::<f64>() / g.len() as f64);
    }
    Ok(BestOfN {
        tasks: groups.len(),
        candidates,
        comparison: paired_comparison(&selected, &random, confidence)?,
    })
}
