//! Points on the 4-option probability simplex, ordered (key, d1, d2, d3).

use serde::{Deserialize, Serialize};

use crate::OPTION_COUNT;

/// Distribution of option-selection likelihoods for one MCQ.
///
/// Entry 0 is always the key; entries 1..=3 are the distractors in corpus order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionDistribution(pub [f64; OPTION_COUNT]);

impl SelectionDistribution {
    pub const UNIFORM: SelectionDistribution = SelectionDistribution([0.25; OPTION_COUNT]);

    /// Normalizes non-negative weights. Returns `None` when the weights do not
    /// have a positive finite sum or any weight is negative.
    pub fn from_weights(weights: [f64; OPTION_COUNT]) -> Option<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return None;
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return None;
        }
        Some(Self(weights.map(|w| w / total)))
    }

    /// Numerically stable softmax over option scores (max-subtracted).
    pub fn softmax(scores: [f64; OPTION_COUNT]) -> Option<Self> {
        if scores.iter().any(|s| !s.is_finite()) {
            return None;
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps = scores.map(|s| (s - max).exp());
        // Summing in sorted order makes the result independent of option order.
        let mut sorted = exps;
        sorted.sort_by(f64::total_cmp);
        let total: f64 = sorted.iter().sum();
        Some(Self(exps.map(|e| e / total)))
    }

    pub fn as_array(&self) -> &[f64; OPTION_COUNT] {
        &self.0
    }

    pub fn key(&self) -> f64 {
        self.0[0]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// True when every entry lies in [0, 1] and the entries sum to 1 within `tol`.
    pub fn is_on_simplex(&self, tol: f64) -> bool {
        self.0.iter().all(|p| (0.0..=1.0).contains(p)) && (self.sum() - 1.0).abs() <= tol
    }

    /// Arithmetic mean of several distributions. `None` for an empty slice.
    pub fn mean(dists: &[SelectionDistribution]) -> Option<Self> {
        if dists.is_empty() {
            return None;
        }
        let mut acc = [0.0; OPTION_COUNT];
        for d in dists {
            for (a, p) in acc.iter_mut().zip(d.0.iter()) {
                *a += p;
            }
        }
        let n = dists.len() as f64;
        Some(Self(acc.map(|a| a / n)))
    }
}
