//! Discrete entropies and mutual information, in nats.
//!
//! Conventions: `0 · ln 0 = 0`; a joint table lays the "target" variable
//! (the hidden state) along rows and the conditioning variable (the summary)
//! along columns.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfoError {
    #[error("joint table has {actual} cells, expected {rows}x{cols}")]
    Shape {
        rows: usize,
        cols: usize,
        actual: usize,
    },
    #[error("joint table cell {index} is {value}, expected a finite non-negative probability")]
    BadCell { index: usize, value: f64 },
    #[error("joint table sums to {0}, expected 1 within 1e-9")]
    NotNormalized(f64),
}

/// Tolerance on the total mass of a joint table.
pub const JOINT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    rows: usize,
    cols: usize,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn new(rows: usize, cols: usize, probs: Vec<f64>) -> Result<Self, InfoError> {
        if probs.len() != rows * cols {
            return Err(InfoError::Shape {
                rows,
                cols,
                actual: probs.len(),
            });
        }
        if let Some((index, &value)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(InfoError::BadCell { index, value });
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > JOINT_SUM_TOLERANCE {
            return Err(InfoError::NotNormalized(sum));
        }
        Ok(Self { rows, cols, probs })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, InfoError> {
        let mut probs = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                probs.push(f(r, c));
            }
        }
        Self::new(rows, cols, probs)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.probs[row * self.cols + col]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.probs[r * self.cols..(r + 1) * self.cols].iter().sum())
            .collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (c, slot) in out.iter_mut().enumerate() {
                *slot += self.get(r, c);
            }
        }
        out
    }
}

/// Shannon entropy `-Σ p ln p`.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// `H(row | col) = -Σ P(r,c) ln(P(r,c) / P(c))`.
pub fn conditional_entropy_state_given_summary(joint: &JointTable) -> f64 {
    let col = joint.col_marginal();
    let mut h = 0.0;
    for r in 0..joint.rows() {
        for (c, &pc) in col.iter().enumerate() {
            let p = joint.get(r, c);
            if p > 0.0 && pc > 0.0 {
                h -= p * (p / pc).ln();
            }
        }
    }
    h
}

/// `I(row; col) = H(row) - H(row | col)`.
pub fn mutual_information(joint: &JointTable) -> f64 {
    entropy(&joint.row_marginal()) - conditional_entropy_state_given_summary(joint)
}
