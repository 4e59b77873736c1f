//! Rejection-sampling estimator.
//!
//! Nuisances are fit on a training half. Source units of the test half are
//! accepted with probability `w_hat(x) / B_hat`, so the accepted units mimic
//! a draw from the target covariate law. The accepted-sample proportion of
//! `Z_tau`, plus a one-step correction, estimates the target coverage error.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crossfit::odds_weight_unchecked;
use crate::error::{Error, Result};
use crate::learners::{fit_binary, BinaryLearnerSpec, FittedPredictor};
use crate::rng::{Purpose, RngStream};
use crate::sample::{ObservedSample, RiskTargets, ThresholdGrid};
use crate::table::CoverageTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundRule {
    /// A user-supplied bound; observed weights above it are an error.
    Fixed(f64),
    /// Largest test-source weight times the multiplier, at least 1.
    MaxTimes(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsConfig {
    /// Fraction of units in the training half.
    pub train_fraction: f64,
    pub bound: BoundRule,
    pub delta: f64,
    pub g_spec: BinaryLearnerSpec,
    pub e_spec: BinaryLearnerSpec,
}

impl Default for RsConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            bound: BoundRule::MaxTimes(1.3),
            delta: 0.01,
            g_spec: BinaryLearnerSpec::default(),
            e_spec: BinaryLearnerSpec::default(),
        }
    }
}

impl RsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "truncation delta {} outside (0, 0.5)",
                self.delta
            )));
        }
        match self.bound {
            BoundRule::Fixed(b) if !(b >= 1.0 && b.is_finite()) => Err(Error::InvalidConfig(format!(
                "fixed bound {b} must be finite and at least 1"
            ))),
            BoundRule::MaxTimes(m) if !(m >= 1.0 && m.is_finite()) => Err(Error::InvalidConfig(format!(
                "bound multiplier {m} must be finite and at least 1"
            ))),
            _ => {
                self.g_spec.validate()?;
                self.e_spec.validate()
            }
        }
    }
}

/// Everything the estimator needs after the split, fits and acceptance draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsRun {
    pub taus: Vec<f64>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub g: FittedPredictor,
    /// One predictor per threshold.
    pub e: Vec<FittedPredictor>,
    pub gamma_train: f64,
    pub delta: f64,
    pub bhat: f64,
    /// Likelihood-ratio weight per test unit.
    pub w_test: Vec<f64>,
    /// Uniform draw per test unit.
    pub zeta: Vec<f64>,
    /// Positions in `test` of the accepted units.
    pub accepted: Vec<usize>,
    pub pi_hat: f64,
}

impl RsRun {
    pub fn n(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_accepted(&self, pos: usize) -> bool {
        self.accepted.binary_search(&pos).is_ok()
    }
}

/// Splits the sample, fits the nuisances on the training half, materializes
/// the bound and draws the acceptance uniforms.
pub fn rs_prepare(sample: &ObservedSample, config: &RsConfig, grid: &ThresholdGrid, rng: &RngStream) -> Result<RsRun> {
    config.validate()?;
    let n = sample.len();
    let n_train = ((config.train_fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1));
    if n < 4 {
        return Err(Error::InvalidArgument(format!("{n} units are too few to split")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng.with_purpose(Purpose::TrainTestSplit).rng());
    let mut train = perm[..n_train].to_vec();
    let mut test = perm[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();

    for (half, idx) in [(0, &train), (1, &test)] {
        let ns = idx.iter().filter(|&&i| sample.unit(i).is_source()).count();
        if ns == 0 || ns == idx.len() {
            return Err(Error::DegenerateFold {
                fold: half,
                n_source: ns,
                n_target: idx.len() - ns,
            });
        }
    }

    let learner_rng = rng.with_purpose(Purpose::LearnerInit);
    let xs: Vec<&[f64]> = train.iter().map(|&i| sample.unit(i).x()).collect();
    let a: Vec<bool> = train.iter().map(|&i| sample.unit(i).is_source()).collect();
    let g = fit_binary(&config.g_spec, &xs, &a, &learner_rng.substream(0))?;
    let gamma_train = a.iter().filter(|&&b| b).count() as f64 / train.len() as f64;

    let src: Vec<usize> = train.iter().copied().filter(|&i| sample.unit(i).is_source()).collect();
    let sx: Vec<&[f64]> = src.iter().map(|&i| sample.unit(i).x()).collect();
    let e = grid
        .taus()
        .iter()
        .enumerate()
        .map(|(t, &tau)| {
            let z: Vec<bool> = src.iter().map(|&i| sample.unit(i).miscovered(tau) == Some(1)).collect();
            fit_binary(&config.e_spec, &sx, &z, &learner_rng.substream(1 + t as u64))
        })
        .collect::<Result<Vec<_>>>()?;

    let w_test: Vec<f64> = test
        .iter()
        .map(|&i| {
            let gi = g.prob(sample.unit(i).x()).clamp(config.delta, 1.0 - config.delta);
            odds_weight_unchecked(gi, gamma_train)
        })
        .collect();
    let src_w: Vec<f64> = test
        .iter()
        .zip(&w_test)
        .filter(|(&i, _)| sample.unit(i).is_source())
        .map(|(_, &w)| w)
        .collect();
    let w_max = src_w.iter().copied().fold(0.0, f64::max);
    let bhat = match config.bound {
        BoundRule::MaxTimes(m) => (w_max * m).max(1.0),
        BoundRule::Fixed(b) => {
            if w_max > b {
                return Err(Error::BoundViolation {
                    bound: b,
                    observed: w_max,
                });
            }
            b
        }
    };
    let pi_hat = src_w.iter().sum::<f64>() / src_w.len() as f64;

    let mut zr = rng.with_purpose(Purpose::RejectionZeta).rng();
    let zeta: Vec<f64> = test.iter().map(|_| zr.random::<f64>()).collect();
    let accepted = test
        .iter()
        .enumerate()
        .filter(|&(k, &i)| sample.unit(i).is_source() && zeta[k] <= w_test[k] / bhat)
        .map(|(k, _)| k)
        .collect();

    Ok(RsRun {
        taus: grid.taus().to_vec(),
        train,
        test,
        g,
        e,
        gamma_train,
        delta: config.delta,
        bhat,
        w_test,
        zeta,
        accepted,
        pi_hat,
    })
}

/// Corrected accepted-sample proportions, their variance estimates and CUBs.
pub fn rs_estimate(run: &RsRun, sample: &ObservedSample, targets: &RiskTargets) -> Result<CoverageTable> {
    if run.accepted.is_empty() {
        return Err(Error::EmptyAcceptance);
    }
    if run.n() != sample.len() {
        return Err(Error::DimensionMismatch {
            expected: sample.len(),
            got: run.n(),
        });
    }
    let n = sample.len() as f64;
    let (ntr, nte) = (run.train.len() as f64, run.test.len() as f64);
    let gamma = run.gamma_train;
    let train_term: f64 = run
        .train
        .iter()
        .map(|&i| {
            let a = sample.unit(i).a() as f64;
            (a - gamma).powi(2) / (gamma * gamma * (1.0 - gamma).powi(2))
        })
        .sum::<f64>()
        / ntr;

    let mut rows = Vec::with_capacity(run.taus.len());
    for (t, &tau) in run.taus.iter().enumerate() {
        let e: Vec<f64> = run
            .test
            .iter()
            .map(|&i| run.e[t].prob(sample.unit(i).x()).clamp(0.0, 1.0))
            .collect();
        let dtilde: Vec<f64> = run
            .test
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let a = sample.unit(i).a() as f64;
                e[k] * (-(a / gamma) * (run.w_test[k] / run.pi_hat) + (1.0 - a) / (1.0 - gamma))
            })
            .collect();
        let prop = run
            .accepted
            .iter()
            .map(|&k| sample.unit(run.test[k]).miscovered(tau).unwrap_or(0) as f64)
            .sum::<f64>()
            / run.accepted.len() as f64;
        let psi = prop + dtilde.iter().sum::<f64>() / nte;

        let mut test_term = 0.0;
        let mut acc = run.accepted.iter().peekable();
        for (k, &i) in run.test.iter().enumerate() {
            let u = sample.unit(i);
            let a = u.a() as f64;
            let hit = if acc.peek() == Some(&&k) {
                acc.next();
                1.0
            } else {
                0.0
            };
            let zi = u.miscovered(tau).unwrap_or(0) as f64;
            let term = run.bhat * a / gamma * hit * (zi - psi) + a * (run.w_test[k] - 1.0) * psi / gamma + dtilde[k];
            test_term += term * term;
        }
        test_term /= nte;
        let var = n / ntr * train_term * psi * psi + n / nte * test_term;
        rows.push(CoverageTable::row(tau, psi, var.sqrt(), sample.len(), targets.z()));
    }
    Ok(CoverageTable {
        method: "rs".into(),
        n: sample.len(),
        z: targets.z(),
        rows,
        folds: Vec::new(),
        flags: Vec::new(),
    })
}
