//! Softmax-linear token policy.
//!
//! `π_θ(w | ctx) = softmax(W φ(ctx))_w` with `W ∈ R^{V×D}`. One weight matrix
//! serves every generation role (memory writing, anchor responses, final
//! answers); the role is part of the features. Sequences are generated
//! autoregressively with the position one-hot advanced at every step.

pub mod checkpoint;
mod features;

pub use features::{ContextFeatures, FeatureLayout, Role, TokenId, Vocabulary};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("feature dimension {actual} does not match parameter dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("token {token} outside vocabulary of size {size}")]
    TokenOutOfRange { token: TokenId, size: usize },
}

/// Weights of the token policy plus an optimizer-step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParameters {
    vocab_size: usize,
    dim: usize,
    weights: Vec<f64>,
    version: u64,
}

impl PolicyParameters {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        Self {
            vocab_size,
            dim,
            weights: vec![0.0; vocab_size * dim],
            version: 0,
        }
    }

    /// Weights drawn uniformly from `[-scale, scale)`.
    pub fn random_uniform(vocab_size: usize, dim: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let weights = (0..vocab_size * dim)
            .map(|_| {
                if scale > 0.0 {
                    rng.gen_range(-scale..scale)
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            vocab_size,
            dim,
            weights,
            version: 0,
        }
    }

    pub fn from_weights(
        vocab_size: usize,
        dim: usize,
        weights: Vec<f64>,
        version: u64,
    ) -> Result<Self, PolicyError> {
        if weights.len() != vocab_size * dim {
            return Err(PolicyError::DimensionMismatch {
                expected: vocab_size * dim,
                actual: weights.len(),
            });
        }
        Ok(Self {
            vocab_size,
            dim,
            weights,
            version,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, token: TokenId, feature: usize) -> f64 {
        self.weights[token * self.dim + feature]
    }

    pub fn set_weight(&mut self, token: TokenId, feature: usize, value: f64) {
        self.weights[token * self.dim + feature] = value;
    }

    /// Mutable access for perturbation tests; does not bump the version.
    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// One optimizer step: `W += delta`, version + 1.
    pub fn apply_step(&mut self, delta: &[f64]) {
        assert_eq!(delta.len(), self.weights.len(), "update shape");
        for (w, d) in self.weights.iter_mut().zip(delta) {
            *w += d;
        }
        self.version += 1;
    }

    /// Advances the version without touching weights.
    pub fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    /// `W φ`, accumulated in feature order.
    pub fn logits(&self, phi: &[f64]) -> Result<Vec<f64>, PolicyError> {
        if phi.len() != self.dim {
            return Err(PolicyError::DimensionMismatch {
                expected: self.dim,
                actual: phi.len(),
            });
        }
        Ok(self
            .weights
            .chunks_exact(self.dim)
            .map(|row| {
                let mut acc = 0.0;
                for (w, x) in row.iter().zip(phi) {
                    acc += w * x;
                }
                acc
            })
            .collect())
    }
}

/// A categorical distribution over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    /// `log Σ_v exp(logit_v)`.
    pub log_normalizer: f64,
}

impl TokenDistribution {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let probs = exps.iter().map(|e| e / sum).collect();
        Self {
            log_normalizer: max + sum.ln(),
            logits,
            probs,
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn log_prob(&self, token: TokenId) -> f64 {
        self.logits[token] - self.log_normalizer
    }

    /// Highest-probability token; ties go to the lowest id.
    pub fn argmax(&self) -> TokenId {
        argmax_among(&self.logits, 0..self.logits.len())
    }

    /// Inverse-CDF draw.
    pub fn sample(&self, rng: &mut impl Rng) -> TokenId {
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        let mut last_positive = 0;
        for (v, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                last_positive = v;
            }
            cum += p;
            if u < cum {
                return v;
            }
        }
        last_positive
    }
}

/// Argmax over a candidate set using logits; ties go to the lowest id.
pub fn argmax_among(logits: &[f64], candidates: impl IntoIterator<Item = TokenId>) -> TokenId {
    let mut best: Option<(TokenId, f64)> = None;
    for v in candidates {
        match best {
            Some((_, z)) if logits[v] <= z => {}
            _ => best = Some((v, logits[v])),
        }
    }
    best.map(|(v, _)| v).expect("non-empty candidate set")
}

pub fn token_distribution(
    params: &PolicyParameters,
    phi: &[f64],
) -> Result<TokenDistribution, PolicyError> {
    Ok(TokenDistribution::from_logits(params.logits(phi)?))
}

/// Tokens and their log-probabilities under the sampling policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSequence {
    pub tokens: Vec<TokenId>,
    pub log_probs: Vec<f64>,
}

/// Samples up to `max_len` tokens, stopping after end-of-sequence.
pub fn sample_sequence(
    params: &PolicyParameters,
    ctx: &ContextFeatures,
    max_len: usize,
    rng: &mut impl Rng,
) -> Result<SampledSequence, PolicyError> {
    let mut tokens = Vec::with_capacity(max_len);
    let mut log_probs = Vec::with_capacity(max_len);
    for pos in 0..max_len {
        let dist = token_distribution(params, &ctx.at_position(pos))?;
        let token = dist.sample(rng);
        tokens.push(token);
        log_probs.push(dist.log_prob(token));
        if token == Vocabulary::EOS {
            break;
        }
    }
    Ok(SampledSequence { tokens, log_probs })
}

/// Argmax decoding, stopping after end-of-sequence.
pub fn greedy_decode(
    params: &PolicyParameters,
    ctx: &ContextFeatures,
    max_len: usize,
) -> Result<Vec<TokenId>, PolicyError> {
    let mut tokens = Vec::with_capacity(max_len);
    for pos in 0..max_len {
        let token = token_distribution(params, &ctx.at_position(pos))?.argmax();
        tokens.push(token);
        if token == Vocabulary::EOS {
            break;
        }
    }
    Ok(tokens)
}

/// Re-scores `tokens` with the same per-position contexts used for generation.
pub fn sequence_log_prob(
    params: &PolicyParameters,
    ctx: &ContextFeatures,
    tokens: &[TokenId],
) -> Result<Vec<f64>, PolicyError> {
    tokens
        .iter()
        .enumerate()
        .map(|(pos, &token)| {
            if token >= params.vocab_size() {
                return Err(PolicyError::TokenOutOfRange {
                    token,
                    size: params.vocab_size(),
                });
            }
            Ok(token_distribution(params, &ctx.at_position(pos))?.log_prob(token))
        })
        .collect()
}

/// `KL(p ‖ q)` between two categorical distributions.
pub fn categorical_kl(p: &TokenDistribution, q: &TokenDistribution) -> f64 {
    let mut kl = 0.0;
    for (v, &pv) in p.probs.iter().enumerate() {
        if pv > 0.0 {
            kl += pv * (p.log_prob(v) - q.log_prob(v));
        }
    }
    kl
}

/// Exact `KL(π_p(·|φ) ‖ π_q(·|φ))`.
pub fn kl_divergence(
    params_p: &PolicyParameters,
    params_q: &PolicyParameters,
    phi: &[f64],
) -> Result<f64, PolicyError> {
    let p = token_distribution(params_p, phi)?;
    let q = token_distribution(params_q, phi)?;
    Ok(categorical_kl(&p, &q))
}

/// Dense gradient buffer shaped like the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub vocab_size: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl Gradient {
    pub fn zeros_like(params: &PolicyParameters) -> Self {
        Self {
            vocab_size: params.vocab_size,
            dim: params.dim,
            values: vec![0.0; params.weights.len()],
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn get(&self, token: TokenId, feature: usize) -> f64 {
        self.values[token * self.dim + feature]
    }

    /// Adds `scale · ∂/∂W log π(token | φ)`, i.e. `scale · (e_token - p) φᵀ`.
    pub fn add_log_prob_grad(
        &mut self,
        dist: &TokenDistribution,
        phi: &[f64],
        token: TokenId,
        scale: f64,
    ) {
        for (v, &pv) in dist.probs.iter().enumerate() {
            let coeff = scale * (if v == token { 1.0 } else { 0.0 } - pv);
            if coeff == 0.0 {
                continue;
            }
            let row = &mut self.values[v * self.dim..(v + 1) * self.dim];
            for (g, &x) in row.iter_mut().zip(phi) {
                *g += coeff * x;
            }
        }
    }

    /// Adds `scale · ∂/∂W KL(π_W(·|φ) ‖ q)`.
    ///
    /// With logits `z`, `∂KL/∂z_k = p_k (log p_k − log q_k − KL)`.
    pub fn add_kl_grad(
        &mut self,
        p: &TokenDistribution,
        q: &TokenDistribution,
        phi: &[f64],
        scale: f64,
    ) {
        let kl = categorical_kl(p, q);
        for (v, &pv) in p.probs.iter().enumerate() {
            if pv == 0.0 {
                continue;
            }
            let coeff = scale * pv * (p.log_prob(v) - q.log_prob(v) - kl);
            let row = &mut self.values[v * self.dim..(v + 1) * self.dim];
            for (g, &x) in row.iter_mut().zip(phi) {
                *g += coeff * x;
            }
        }
    }
}
