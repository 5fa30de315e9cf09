//! Belief entropy: mean per-token predictive entropy of the greedy response
//! to an anchor question, given the current memory.
//!
//! ```text
//! Ĥ(m_t) = (1/|y*|) Σ_ℓ  -Σ_{v ∈ C_ℓ} π̃(v | m_t, q, y*_<ℓ) ln π̃(v | m_t, q, y*_<ℓ)
//! ```
//!
//! `C_ℓ` is the candidate set (full vocabulary, top-k or top-p) and `π̃` the
//! renormalized probabilities on it. Every decoded step counts, including the
//! end-of-sequence step. The estimate is a reward signal only: nothing here is
//! differentiated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{
    token_distribution, FeatureLayout, PolicyError, PolicyParameters, Role, TokenDistribution,
    TokenId, Vocabulary,
};

/// Which tokens enter the per-step entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateSetPolicy {
    #[default]
    FullVocab,
    TopK(usize),
    TopP(f64),
}

impl CandidateSetPolicy {
    pub fn validate(&self, vocab_size: usize) -> Result<(), String> {
        match *self {
            Self::FullVocab => Ok(()),
            Self::TopK(k) if k >= 1 && k <= vocab_size => Ok(()),
            Self::TopK(k) => Err(format!("top-k {k} outside [1, {vocab_size}]")),
            Self::TopP(p) if p > 0.0 && p <= 1.0 => Ok(()),
            Self::TopP(p) => Err(format!("top-p {p} outside (0, 1]")),
        }
    }
}

/// The probe posed to the policy after each memory update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorVariant {
    /// Progress and remaining gap: anchor marker, with the turn-progress feature.
    #[default]
    ProgressGap,
    /// Remaining gap only: anchor marker, turn-progress feature withheld.
    GapOnly,
    /// Asks for the answer itself: the answer prompt in the answer role.
    DirectAnswer,
}

impl AnchorVariant {
    pub const ALL: [AnchorVariant; 3] = [Self::ProgressGap, Self::GapOnly, Self::DirectAnswer];

    pub fn name(&self) -> &'static str {
        match self {
            Self::ProgressGap => "progress-gap",
            Self::GapOnly => "gap-only",
            Self::DirectAnswer => "direct-answer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct AnchorQuestion {
    pub variant: AnchorVariant,
}

impl AnchorQuestion {
    pub fn new(variant: AnchorVariant) -> Self {
        Self { variant }
    }

    pub fn marker(&self) -> TokenId {
        match self.variant {
            AnchorVariant::ProgressGap | AnchorVariant::GapOnly => Vocabulary::ANCHOR,
            AnchorVariant::DirectAnswer => Vocabulary::ANSWER,
        }
    }

    /// Response context for memory `memory` at progress `turn_fraction`.
    pub fn context(
        &self,
        layout: &FeatureLayout,
        memory: &[TokenId],
        turn_fraction: f64,
    ) -> crate::policy::ContextFeatures {
        let marker = [self.marker()];
        match self.variant {
            AnchorVariant::ProgressGap => {
                layout.context(Role::AnchorResponse, memory, &marker, Some(turn_fraction))
            }
            AnchorVariant::GapOnly => layout.context(Role::AnchorResponse, memory, &marker, None),
            AnchorVariant::DirectAnswer => {
                layout.context(Role::Answer, memory, &marker, Some(turn_fraction))
            }
        }
    }
}

/// Result of one belief-entropy evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefEntropyEstimate {
    /// Mean of `per_token`, in nats.
    pub value: f64,
    pub per_token: Vec<f64>,
    /// The greedy anchor response `y*`.
    pub response: Vec<TokenId>,
}

impl BeliefEntropyEstimate {
    pub fn response_length(&self) -> usize {
        self.response.len()
    }
}

/// Candidate token ids in descending probability order (ties to the lowest
/// id), or `None` when the policy keeps the full vocabulary.
pub fn select_candidates(probs: &[f64], policy: CandidateSetPolicy) -> Option<Vec<TokenId>> {
    let n = probs.len();
    let sorted = || {
        let mut ids: Vec<TokenId> = (0..n).collect();
        ids.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
        ids
    };
    match policy {
        CandidateSetPolicy::FullVocab => None,
        CandidateSetPolicy::TopK(k) if k >= n => None,
        CandidateSetPolicy::TopK(k) => Some(sorted().into_iter().take(k.max(1)).collect()),
        CandidateSetPolicy::TopP(p) if p >= 1.0 => None,
        CandidateSetPolicy::TopP(p) => {
            let ids = sorted();
            let mut cum = 0.0;
            let mut keep = n;
            for (i, &v) in ids.iter().enumerate() {
                cum += probs[v];
                if cum >= p {
                    keep = i + 1;
                    break;
                }
            }
            (keep < n).then(|| ids[..keep].to_vec())
        }
    }
}

/// `π̃` on the candidate set as `(token, probability)` pairs.
pub fn renormalize_candidates(
    dist: &TokenDistribution,
    policy: CandidateSetPolicy,
) -> Vec<(TokenId, f64)> {
    match select_candidates(&dist.probs, policy) {
        None => dist.probs.iter().copied().enumerate().collect(),
        Some(ids) => {
            let mass: f64 = ids.iter().map(|&v| dist.probs[v]).sum();
            ids.into_iter().map(|v| (v, dist.probs[v] / mass)).collect()
        }
    }
}

/// Entropy of `π̃`, computed as `lse_C(z) − Σ_{v∈C} π̃_v z_v` and clamped to
/// `[0, ln |C|]`.
pub fn candidate_entropy(dist: &TokenDistribution, policy: CandidateSetPolicy) -> f64 {
    let (h, n) = match select_candidates(&dist.probs, policy) {
        None => {
            let mut expected = 0.0;
            for (p, z) in dist.probs.iter().zip(&dist.logits) {
                if *p > 0.0 {
                    expected += p * z;
                }
            }
            (dist.log_normalizer - expected, dist.len())
        }
        Some(ids) => {
            let max = ids
                .iter()
                .map(|&v| dist.logits[v])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for &v in &ids {
                sum += (dist.logits[v] - max).exp();
            }
            let lse = max + sum.ln();
            let mut expected = 0.0;
            for &v in &ids {
                let p = (dist.logits[v] - lse).exp();
                if p > 0.0 {
                    expected += p * dist.logits[v];
                }
            }
            (lse - expected, ids.len())
        }
    };
    h.max(0.0).min((n as f64).ln())
}

/// Greedy-decodes the anchor response and averages per-step candidate entropies.
#[allow(clippy::too_many_arguments)]
pub fn estimate_belief_entropy(
    params: &PolicyParameters,
    layout: &FeatureLayout,
    memory: &[TokenId],
    turn_fraction: f64,
    anchor: &AnchorQuestion,
    policy: CandidateSetPolicy,
    max_len: usize,
) -> Result<BeliefEntropyEstimate, PolicyError> {
    let ctx = anchor.context(layout, memory, turn_fraction);
    let mut response = Vec::with_capacity(max_len);
    let mut per_token = Vec::with_capacity(max_len);
    for pos in 0..max_len.max(1) {
        let dist = token_distribution(params, &ctx.at_position(pos))?;
        per_token.push(candidate_entropy(&dist, policy));
        let token = dist.argmax();
        response.push(token);
        if token == Vocabulary::EOS {
            break;
        }
    }
    // Running mean.
    let mut value = 0.0;
    for (i, h) in per_token.iter().enumerate() {
        value += (h - value) / (i + 1) as f64;
    }
    Ok(BeliefEntropyEstimate {
        value,
        per_token,
        response,
    })
}

// ---------------------------------------------------------------------------
// Chain-rule check on enumerable joints
// ---------------------------------------------------------------------------

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompositionError {
    #[error("joint has {actual} cells, expected {expected}")]
    Shape { expected: usize, actual: usize },
    #[error("joint is not a distribution (sum {0})")]
    NotNormalized(f64),
    #[error("joint needs {cells} cells, cap is {cap}")]
    EnumerationTooLarge { cells: u128, cap: u64 },
    #[error("chain rule residual {0:e} exceeds 1e-9")]
    ChainRule(f64),
    #[error("I(y;s|m) = {mi} exceeds H(s|m) = {bound}")]
    Bound { mi: f64, bound: f64 },
}

/// A joint `P(s, m, y)` over state, memory summary and anchor response.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSummaryResponseJoint {
    pub states: usize,
    pub summaries: usize,
    pub responses: usize,
    probs: Vec<f64>,
}

impl StateSummaryResponseJoint {
    pub fn new(
        states: usize,
        summaries: usize,
        responses: usize,
        probs: Vec<f64>,
    ) -> Result<Self, DecompositionError> {
        let expected = states * summaries * responses;
        if probs.len() != expected {
            return Err(DecompositionError::Shape {
                expected,
                actual: probs.len(),
            });
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(DecompositionError::NotNormalized(sum));
        }
        Ok(Self {
            states,
            summaries,
            responses,
            probs,
        })
    }

    /// Builds `P(s, m) · P(y | m, s)` from a state-summary joint and a
    /// response model; `cap` bounds the number of cells.
    pub fn from_response_model(
        state_summary: &crate::pomdp::info::JointTable,
        responses: usize,
        response_model: impl Fn(usize, usize) -> Vec<f64>,
        cap: u64,
    ) -> Result<Self, DecompositionError> {
        let (s, m) = (state_summary.rows(), state_summary.cols());
        let cells = s as u128 * m as u128 * responses as u128;
        if cells > cap as u128 {
            return Err(DecompositionError::EnumerationTooLarge { cells, cap });
        }
        let mut probs = vec![0.0; s * m * responses];
        for si in 0..s {
            for mi in 0..m {
                let py = response_model(mi, si);
                if py.len() != responses {
                    return Err(DecompositionError::Shape {
                        expected: responses,
                        actual: py.len(),
                    });
                }
                for (y, p) in py.into_iter().enumerate() {
                    probs[(si * m + mi) * responses + y] = state_summary.get(si, mi) * p;
                }
            }
        }
        Self::new(s, m, responses, probs)
    }

    pub fn get(&self, s: usize, m: usize, y: usize) -> f64 {
        self.probs[(s * self.summaries + m) * self.responses + y]
    }
}

/// The three chain-rule terms plus the bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionReport {
    /// `H(y | m)`.
    pub response_entropy: f64,
    /// `H(y | m, s)`.
    pub state_conditioned_entropy: f64,
    /// `I(y; s | m)`, from its own definition.
    pub residual_information: f64,
    /// `H(s | m)`.
    pub state_entropy: f64,
}

impl DecompositionReport {
    pub fn chain_rule_residual(&self) -> f64 {
        self.response_entropy - self.state_conditioned_entropy - self.residual_information
    }
}

/// Evaluates `H(y|m) = H(y|m,s) + I(y;s|m)` and `I(y;s|m) ≤ H(s|m)` on an
/// enumerated joint (the anchor question is fixed, so conditioning on it is
/// implicit).
pub fn anchor_decomposition_check(
    joint: &StateSummaryResponseJoint,
) -> Result<DecompositionReport, DecompositionError> {
    let (ns, nm, ny) = (joint.states, joint.summaries, joint.responses);
    let mut p_m = vec![0.0; nm];
    let mut p_sm = vec![0.0; ns * nm];
    let mut p_my = vec![0.0; nm * ny];
    for s in 0..ns {
        for m in 0..nm {
            for y in 0..ny {
                let p = joint.get(s, m, y);
                p_m[m] += p;
                p_sm[s * nm + m] += p;
                p_my[m * ny + y] += p;
            }
        }
    }
    let mut h_y_m = 0.0;
    for m in 0..nm {
        for y in 0..ny {
            let p = p_my[m * ny + y];
            if p > 0.0 {
                h_y_m -= p * (p / p_m[m]).ln();
            }
        }
    }
    let mut h_y_ms = 0.0;
    let mut mi = 0.0;
    for s in 0..ns {
        for m in 0..nm {
            let psm = p_sm[s * nm + m];
            for y in 0..ny {
                let p = joint.get(s, m, y);
                if p > 0.0 {
                    h_y_ms -= p * (p / psm).ln();
                    // p(s,y|m) / (p(s|m) p(y|m)) = p(s,m,y) p(m) / (p(s,m) p(m,y))
                    mi += p * ((p * p_m[m]) / (psm * p_my[m * ny + y])).ln();
                }
            }
        }
    }
    let mut h_s_m = 0.0;
    for s in 0..ns {
        for m in 0..nm {
            let p = p_sm[s * nm + m];
            if p > 0.0 {
                h_s_m -= p * (p / p_m[m]).ln();
            }
        }
    }
    let report = DecompositionReport {
        response_entropy: h_y_m,
        state_conditioned_entropy: h_y_ms,
        residual_information: mi,
        state_entropy: h_s_m,
    };
    let residual = report.chain_rule_residual();
    if residual.abs() >= 1e-9 {
        return Err(DecompositionError::ChainRule(residual));
    }
    if mi > h_s_m + 1e-9 {
        return Err(DecompositionError::Bound { mi, bound: h_s_m });
    }
    Ok(report)
}
