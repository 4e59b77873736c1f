//! Split conformal baselines: a PAC-tuned inductive rule that ignores the
//! shift, and weighted conformal prediction with an estimated likelihood
//! ratio.
//!
//! Scores are conformity scores: larger means more plausible, and a label is
//! in the set when its score is at least the cutoff.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::RiskTargets;
use crate::stats::binomial_upper_tail;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    sorted: Vec<f64>,
}

impl CalibrationSet {
    pub fn new(mut scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidArgument("empty calibration set".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("non-finite calibration score".into()));
        }
        scores.sort_by(f64::total_cmp);
        Ok(Self { sorted: scores })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }
}

/// Order-statistic index for the PAC rule: the largest `k >= 1` with
/// `P(Bin(m, alpha_error) >= k) >= 1 - alpha_conf`.
pub fn inductive_cp_rank(m: usize, targets: &RiskTargets) -> Option<usize> {
    let level = 1.0 - targets.alpha_conf();
    // the tail is decreasing in k
    let mut best = None;
    for k in 1..=m {
        if binomial_upper_tail(m as u64, targets.alpha_error(), k as u64) >= level {
            best = Some(k);
        } else {
            break;
        }
    }
    best
}

/// The `k`-th smallest calibration score for the rank above, or `None` for
/// the sentinel.
pub fn inductive_cp_threshold(cal: &CalibrationSet, targets: &RiskTargets) -> Option<f64> {
    inductive_cp_rank(cal.len(), targets).map(|k| cal.sorted[k - 1])
}

/// Calibration scores with likelihood-ratio weights, prepared for repeated
/// cutoff queries with different test-point weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedCalibration {
    /// Distinct scores, ascending.
    scores: Vec<f64>,
    /// Total weight strictly below each distinct score.
    below: Vec<f64>,
    total: f64,
}

impl WeightedCalibration {
    pub fn new(scores: &[f64], weights: &[f64]) -> Result<Self> {
        if scores.is_empty() || scores.len() != weights.len() {
            return Err(Error::InvalidArgument(
                "scores and weights must be non-empty and equal length".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let mut pairs: Vec<(f64, f64)> = scores.iter().copied().zip(weights.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut uniq = Vec::new();
        let mut below = Vec::new();
        let mut acc = 0.0;
        let mut k = 0;
        while k < pairs.len() {
            let s = pairs[k].0;
            uniq.push(s);
            below.push(acc);
            while k < pairs.len() && pairs[k].0 == s {
                acc += pairs[k].1;
                k += 1;
            }
        }
        Ok(Self {
            scores: uniq,
            below,
            total: acc,
        })
    }

    /// Largest calibration score `t` with
    /// `(w_new + weight below t) / (total + w_new) <= alpha`, or negative
    /// infinity when none qualifies (the set keeps every label).
    pub fn cutoff(&self, w_new: f64, alpha: f64) -> Result<f64> {
        let denom = self.total + w_new;
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::DegenerateWeights);
        }
        let budget = alpha * denom - w_new;
        // `below` is nondecreasing; count entries within budget
        let tol = 1e-12 * denom;
        let k = self.below.partition_point(|&b| b <= budget + tol);
        Ok(if k == 0 { f64::NEG_INFINITY } else { self.scores[k - 1] })
    }
}

/// Membership of each candidate score in the weighted conformal set.
pub fn weighted_cp_set(
    cal_scores: &[f64],
    cal_weights: &[f64],
    w_new: f64,
    candidates: &[f64],
    targets: &RiskTargets,
) -> Result<Vec<bool>> {
    let t = WeightedCalibration::new(cal_scores, cal_weights)?.cutoff(w_new, targets.alpha_error())?;
    Ok(candidates.iter().map(|&s| s >= t).collect())
}
