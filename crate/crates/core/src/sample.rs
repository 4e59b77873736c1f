//! Observed data, threshold grids and risk targets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Miscoverage of the nested set `C_tau(x) = { y : s(x, y) >= tau }`.
///
/// Returns 1 when `score < tau`; a score equal to `tau` is covered.
#[inline]
pub fn miscoverage_indicator(score: f64, tau: f64) -> u8 {
    u8::from(score < tau)
}

/// One observation. Source units (`a = 1`) carry the score `s(x, y)` of their
/// observed label; target units (`a = 0`) carry covariates only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedUnit {
    x: Vec<f64>,
    score: Option<f64>,
}

impl ObservedUnit {
    pub fn source(x: Vec<f64>, score: f64) -> Self {
        Self { x, score: Some(score) }
    }

    pub fn target(x: Vec<f64>) -> Self {
        Self { x, score: None }
    }

    /// Population indicator: 1 for source, 0 for target.
    #[inline]
    pub fn a(&self) -> u8 {
        u8::from(self.score.is_some())
    }

    #[inline]
    pub fn is_source(&self) -> bool {
        self.score.is_some()
    }

    #[inline]
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    #[inline]
    pub fn score(&self) -> Option<f64> {
        self.score
    }

    /// `Z_tau` for a source unit, `None` for a target unit.
    #[inline]
    pub fn miscovered(&self, tau: f64) -> Option<u8> {
        self.score.map(|s| miscoverage_indicator(s, tau))
    }
}

/// An ordered sample with data from both populations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSample {
    units: Vec<ObservedUnit>,
    p: usize,
}

impl ObservedSample {
    /// Validates the covariate dimension and that both populations are present.
    pub fn new(units: Vec<ObservedUnit>) -> Result<Self> {
        let p = units
            .first()
            .map(|u| u.x.len())
            .ok_or_else(|| Error::InvalidArgument("empty sample".into()))?;
        if p == 0 {
            return Err(Error::InvalidArgument("covariate dimension must be >= 1".into()));
        }
        for (i, u) in units.iter().enumerate() {
            if u.x.len() != p {
                return Err(Error::InvalidArgument(format!(
                    "unit {i} has {} covariates, expected {p}",
                    u.x.len()
                )));
            }
            if u.x.iter().any(|v| !v.is_finite()) || u.score.is_some_and(|s| !s.is_finite()) {
                return Err(Error::InvalidArgument(format!("unit {i} has a non-finite value")));
            }
        }
        let n1 = units.iter().filter(|u| u.is_source()).count();
        if n1 == 0 || n1 == units.len() {
            return Err(Error::InvalidArgument(format!(
                "data from both populations required: {n1} source, {} target units",
                units.len() - n1
            )));
        }
        Ok(Self { units, p })
    }

    pub fn units(&self) -> &[ObservedUnit] {
        &self.units
    }

    pub fn unit(&self, i: usize) -> &ObservedUnit {
        &self.units[i]
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn n_source(&self) -> usize {
        self.units.iter().filter(|u| u.is_source()).count()
    }

    pub fn n_target(&self) -> usize {
        self.len() - self.n_source()
    }

    pub fn source_scores(&self) -> Vec<f64> {
        self.units.iter().filter_map(|u| u.score).collect()
    }
}

/// Fraction of source units among `indices`.
pub fn empirical_gamma(sample: &ObservedSample, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("empty index set".into()));
    }
    let n1 = indices.iter().filter(|&&i| sample.unit(i).is_source()).count();
    Ok(n1 as f64 / indices.len() as f64)
}

/// Strictly increasing, non-empty candidate thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    taus: Vec<f64>,
}

impl ThresholdGrid {
    pub fn new(taus: Vec<f64>) -> Result<Self> {
        if taus.is_empty() {
            return Err(Error::InvalidConfig("threshold grid is empty".into()));
        }
        if taus.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidConfig("threshold grid has non-finite values".into()));
        }
        if taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "threshold grid must be strictly increasing".into(),
            ));
        }
        Ok(Self { taus })
    }

    /// `lo, lo + step, ..., hi` (inclusive, up to rounding).
    pub fn linspace(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidConfig(format!("bad grid specification {lo}:{hi}:{step}")));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        let taus = (0..count)
            .map(|k| ((lo + step * k as f64) * 1e12).round() / 1e12)
            .collect();
        Self::new(taus)
    }

    /// Empirical quantiles of the observed source scores at `levels`,
    /// deduplicated. The levels need not match any particular recipe.
    pub fn from_score_quantiles(sample: &ObservedSample, levels: &[f64]) -> Result<Self> {
        let mut scores = sample.source_scores();
        scores.sort_by(f64::total_cmp);
        let mut taus: Vec<f64> = levels
            .iter()
            .map(|&q| crate::stats::empirical_quantile_sorted(&scores, q))
            .collect();
        taus.sort_by(f64::total_cmp);
        taus.dedup();
        Self::new(taus)
    }

    /// The default grid 0, 0.05, ..., 0.3.
    pub fn default_grid() -> Self {
        Self::linspace(0.0, 0.3, 0.05).expect("static grid")
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Miscoverage level `alpha_error` and confidence level `alpha_conf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskTargets {
    alpha_error: f64,
    alpha_conf: f64,
}

impl RiskTargets {
    /// `alpha_conf` must lie in `(0, 0.5)` so the Wald quantile is positive.
    pub fn new(alpha_error: f64, alpha_conf: f64) -> Result<Self> {
        if !(alpha_error > 0.0 && alpha_error < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha_error must be in (0,1), got {alpha_error}"
            )));
        }
        if !(alpha_conf > 0.0 && alpha_conf < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "alpha_conf must be in (0,0.5), got {alpha_conf}"
            )));
        }
        Ok(Self {
            alpha_error,
            alpha_conf,
        })
    }

    pub fn alpha_error(&self) -> f64 {
        self.alpha_error
    }

    pub fn alpha_conf(&self) -> f64 {
        self.alpha_conf
    }

    /// Upper `alpha_conf` standard normal quantile.
    pub fn z(&self) -> f64 {
        crate::stats::normal_upper_quantile(self.alpha_conf)
    }
}

impl Default for RiskTargets {
    fn default() -> Self {
        Self {
            alpha_error: 0.05,
            alpha_conf: 0.05,
        }
    }
}
