use serde::{Deserialize, Serialize};

use super::PolicyError;

pub type TokenId = usize;

/// Token id layout.
///
/// | ids                      | meaning                          |
/// |--------------------------|----------------------------------|
/// | 0                        | padding                          |
/// | 1                        | end of sequence                  |
/// | 2                        | anchor-question marker           |
/// | 3                        | answer-prompt marker             |
/// | 4 .. 4+F·K               | evidence `(fact, value)`         |
/// | 4+F·K .. V               | distractors                      |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    size: usize,
    num_facts: usize,
    fact_domain: usize,
}

impl Vocabulary {
    pub const PAD: TokenId = 0;
    pub const EOS: TokenId = 1;
    pub const ANCHOR: TokenId = 2;
    pub const ANSWER: TokenId = 3;
    const EVIDENCE_BASE: TokenId = 4;
    pub const MIN_SIZE: usize = 8;

    pub fn new(size: usize, num_facts: usize, fact_domain: usize) -> Result<Self, PolicyError> {
        if size < Self::MIN_SIZE {
            return Err(PolicyError::InvalidVocabulary(format!(
                "size {size} below minimum {}",
                Self::MIN_SIZE
            )));
        }
        if num_facts == 0 || fact_domain < 2 {
            return Err(PolicyError::InvalidVocabulary(format!(
                "need at least one fact with two values, got F={num_facts}, K={fact_domain}"
            )));
        }
        let needed = num_facts
            .checked_mul(fact_domain)
            .and_then(|n| n.checked_add(Self::EVIDENCE_BASE));
        match needed {
            Some(n) if n <= size => Ok(Self {
                size,
                num_facts,
                fact_domain,
            }),
            _ => Err(PolicyError::InvalidVocabulary(format!(
                "size {size} cannot hold 4 reserved ids plus {num_facts}x{fact_domain} evidence ids"
            ))),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn num_facts(&self) -> usize {
        self.num_facts
    }

    pub fn fact_domain(&self) -> usize {
        self.fact_domain
    }

    pub fn evidence(&self, fact: usize, value: usize) -> TokenId {
        debug_assert!(fact < self.num_facts && value < self.fact_domain);
        Self::EVIDENCE_BASE + fact * self.fact_domain + value
    }

    pub fn evidence_fact_value(&self, token: TokenId) -> Option<(usize, usize)> {
        let offset = token.checked_sub(Self::EVIDENCE_BASE)?;
        (offset < self.num_facts * self.fact_domain)
            .then(|| (offset / self.fact_domain, offset % self.fact_domain))
    }

    /// The value tokens admissible for one answer slot.
    pub fn fact_candidates(&self, fact: usize) -> std::ops::Range<TokenId> {
        let start = self.evidence(fact, 0);
        start..start + self.fact_domain
    }

    pub fn distractors(&self) -> std::ops::Range<TokenId> {
        Self::EVIDENCE_BASE + self.num_facts * self.fact_domain..self.size
    }
}

/// Generation role, one-hot encoded in the features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    MemoryWrite = 0,
    AnchorResponse = 1,
    Answer = 2,
}

/// Feature vector layout:
/// `[memory bag (V) | segment bag (V) | role (3) | position (3·P) | turn (1)]`.
///
/// The position one-hot has a separate block of `P` slots per role, so
/// output position never acts as a bias shared between roles.
///
/// The segment bag holds the observation chunk when writing memory and the
/// prompt marker tokens when answering or responding to the anchor. Padding
/// tokens are masked out of both bags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    vocab_size: usize,
    max_positions: usize,
}

impl FeatureLayout {
    pub fn new(vocab_size: usize, max_positions: usize) -> Self {
        assert!(max_positions >= 1);
        Self {
            vocab_size,
            max_positions,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn max_positions(&self) -> usize {
        self.max_positions
    }

    pub fn dim(&self) -> usize {
        2 * self.vocab_size + 3 + 3 * self.max_positions + 1
    }

    pub fn memory_offset(&self) -> usize {
        0
    }

    pub fn segment_offset(&self) -> usize {
        self.vocab_size
    }

    pub fn role_offset(&self) -> usize {
        2 * self.vocab_size
    }

    /// Start of the position block for `role`.
    pub fn position_offset(&self, role: Role) -> usize {
        2 * self.vocab_size + 3 + role as usize * self.max_positions
    }

    pub fn turn_offset(&self) -> usize {
        2 * self.vocab_size + 3 + 3 * self.max_positions
    }

    /// Builds the position-free part of a context.
    ///
    /// `turn_fraction` is `t / T`; `None` leaves the turn feature at zero.
    pub fn context(
        &self,
        role: Role,
        memory: &[TokenId],
        segment: &[TokenId],
        turn_fraction: Option<f64>,
    ) -> ContextFeatures {
        let mut base = vec![0.0; self.dim()];
        for &t in memory {
            if t != Vocabulary::PAD && t < self.vocab_size {
                base[self.memory_offset() + t] += 1.0;
            }
        }
        for &t in segment {
            if t != Vocabulary::PAD && t < self.vocab_size {
                base[self.segment_offset() + t] += 1.0;
            }
        }
        base[self.role_offset() + role as usize] = 1.0;
        if let Some(frac) = turn_fraction {
            base[self.turn_offset()] = frac;
        }
        ContextFeatures {
            base,
            position_offset: self.position_offset(role),
            max_positions: self.max_positions,
        }
    }
}

/// Context for one generated sequence; the position one-hot is filled per step.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextFeatures {
    base: Vec<f64>,
    position_offset: usize,
    max_positions: usize,
}

impl ContextFeatures {
    pub fn dim(&self) -> usize {
        self.base.len()
    }

    /// Dense features for output position `pos`; positions past the last
    /// slot share the last one-hot.
    pub fn at_position(&self, pos: usize) -> Vec<f64> {
        let mut phi = self.base.clone();
        phi[self.position_offset + pos.min(self.max_positions - 1)] = 1.0;
        phi
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }
}
