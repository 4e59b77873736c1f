//! Binary-outcome regression learners for the nuisance functions.
//!
//! Two learners sit behind [`fit_binary`]: ridge-penalized logistic
//! regression solved by IRLS, and gradient-boosted decision stumps on the
//! logistic loss. Both return a [`FittedPredictor`] mapping covariates to a
//! probability. Constant labels short-circuit to the matching constant
//! predictor regardless of the learner, so extreme thresholds get exact
//! zero/one fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::simbench::dgp::OracleFunction;
use crate::stats::{expit, logit};

/// Stump predictions never leave this band.
pub const STUMP_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LearnerKind {
    LogisticRidge,
    BoostedStumps,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryLearnerSpec {
    pub kind: LearnerKind,
    /// Ridge penalty on non-intercept coefficients.
    pub lambda: f64,
    pub max_iter: usize,
    /// Relative tolerance on the change in penalized deviance.
    pub tol: f64,
    /// Center and scale covariates before fitting the logistic model.
    pub standardize: bool,
    pub rounds: usize,
    pub learning_rate: f64,
    /// Minimum hessian mass in each child of a stump.
    pub min_child_weight: f64,
}

impl Default for BinaryLearnerSpec {
    fn default() -> Self {
        Self::logistic_ridge(1e-6)
    }
}

impl BinaryLearnerSpec {
    pub fn logistic_ridge(lambda: f64) -> Self {
        Self {
            kind: LearnerKind::LogisticRidge,
            lambda,
            max_iter: 50,
            tol: 1e-8,
            standardize: false,
            rounds: 100,
            learning_rate: 0.1,
            min_child_weight: 1.0,
        }
    }

    pub fn boosted_stumps(rounds: usize, learning_rate: f64, min_child_weight: f64) -> Self {
        Self {
            kind: LearnerKind::BoostedStumps,
            rounds,
            learning_rate,
            min_child_weight,
            ..Self::logistic_ridge(1e-6)
        }
    }

    /// Intercept-only fit: the training mean.
    pub fn constant() -> Self {
        Self {
            kind: LearnerKind::Constant,
            ..Self::logistic_ridge(0.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ridge lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.max_iter == 0 || self.rounds == 0 {
            return Err(Error::InvalidConfig("iteration caps must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.min_child_weight >= 0.0) {
            return Err(Error::InvalidConfig("bad boosting hyperparameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitStatus {
    Converged,
    /// Hit `max_iter` with finite coefficients; the last iterate is kept.
    IterationCap,
    /// IRLS produced non-finite values or a singular system.
    InterceptFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
    /// Per-feature (mean, scale) applied before the linear predictor.
    pub standardization: Option<Vec<(f64, f64)>>,
    pub status: FitStatus,
    pub iterations: usize,
}

impl LogisticModel {
    fn linear_predictor(&self, x: &[f64]) -> f64 {
        let mut eta = self.intercept;
        match &self.standardization {
            Some(st) => {
                for ((b, xi), (m, s)) in self.coef.iter().zip(x).zip(st) {
                    eta += b * (xi - m) / s;
                }
            }
            None => {
                for (b, xi) in self.coef.iter().zip(x) {
                    eta += b * xi;
                }
            }
        }
        eta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StumpEnsemble {
    pub base: f64,
    pub stumps: Vec<Stump>,
}

impl StumpEnsemble {
    fn raw(&self, x: &[f64]) -> f64 {
        self.stumps.iter().fold(self.base, |acc, s| {
            acc + if x[s.feature] <= s.threshold { s.left } else { s.right }
        })
    }
}

/// A fitted probability model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedPredictor {
    Constant(f64),
    Logistic {
        dim: usize,
        model: LogisticModel,
    },
    Stumps {
        dim: usize,
        model: StumpEnsemble,
    },
    /// A known nuisance function of a built-in data-generating process.
    Oracle(OracleFunction),
}

impl FittedPredictor {
    pub fn dim(&self) -> Option<usize> {
        match self {
            FittedPredictor::Constant(_) => None,
            FittedPredictor::Logistic { dim, .. } | FittedPredictor::Stumps { dim, .. } => Some(*dim),
            FittedPredictor::Oracle(f) => Some(f.dim()),
        }
    }

    /// `Some(c)` when the predictor is the constant `c`.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            FittedPredictor::Constant(c) => Some(*c),
            FittedPredictor::Oracle(f) => f.as_constant(),
            _ => None,
        }
    }

    /// Probability at `x` without a dimension check.
    #[inline]
    pub fn prob(&self, x: &[f64]) -> f64 {
        match self {
            FittedPredictor::Constant(c) => *c,
            FittedPredictor::Logistic { model, .. } => expit(model.linear_predictor(x)),
            FittedPredictor::Stumps { model, .. } => expit(model.raw(x)).clamp(STUMP_CLAMP, 1.0 - STUMP_CLAMP),
            FittedPredictor::Oracle(f) => f.eval(x),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if let Some(d) = self.dim() {
            if d != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
        }
        Ok(self.prob(x))
    }

    pub fn status(&self) -> Option<FitStatus> {
        match self {
            FittedPredictor::Logistic { model, .. } => Some(model.status),
            _ => None,
        }
    }
}

/// Fits `P(z = 1 | x)` on the rows `xs`.
///
/// Constant labels return the matching constant predictor before any
/// learner runs. `rng` is accepted for learners with random initialization;
/// the current learners are deterministic.
pub fn fit_binary(spec: &BinaryLearnerSpec, xs: &[&[f64]], z: &[bool], _rng: &RngStream) -> Result<FittedPredictor> {
    spec.validate()?;
    if xs.is_empty() {
        return Err(Error::InvalidArgument("cannot fit on zero rows".into()));
    }
    if xs.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: z.len(),
        });
    }
    let dim = xs[0].len();
    if let Some(bad) = xs.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let ones = z.iter().filter(|&&b| b).count();
    if ones == 0 {
        return Ok(FittedPredictor::Constant(0.0));
    }
    if ones == z.len() {
        return Ok(FittedPredictor::Constant(1.0));
    }
    let zbar = ones as f64 / z.len() as f64;
    match spec.kind {
        LearnerKind::Constant => Ok(FittedPredictor::Constant(zbar)),
        LearnerKind::LogisticRidge => Ok(FittedPredictor::Logistic {
            dim,
            model: fit_logistic(spec, xs, z),
        }),
        LearnerKind::BoostedStumps => Ok(FittedPredictor::Stumps {
            dim,
            model: fit_stumps(spec, xs, z),
        }),
    }
}

fn penalized_deviance(eta: &[f64], z: &[bool], beta: &DVector<f64>, lambda: f64) -> f64 {
    let mut dev = 0.0;
    for (&e, &zi) in eta.iter().zip(z) {
        // -2 log-likelihood, computed stably from the linear predictor
        let t = if zi { -e } else { e };
        dev += 2.0
            * if t > 0.0 {
                t + (-t).exp().ln_1p()
            } else {
                t.exp().ln_1p()
            };
    }
    let ridge: f64 = beta.iter().skip(1).map(|b| b * b).sum();
    dev + lambda * ridge
}

fn fit_logistic(spec: &BinaryLearnerSpec, xs: &[&[f64]], z: &[bool]) -> LogisticModel {
    let n = xs.len();
    let p = xs[0].len();
    let k = p + 1;

    let standardization = spec.standardize.then(|| {
        (0..p)
            .map(|j| {
                let m = xs.iter().map(|r| r[j]).sum::<f64>() / n as f64;
                let v = xs.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n as f64;
                let s = v.sqrt();
                (m, if s > 0.0 { s } else { 1.0 })
            })
            .collect::<Vec<_>>()
    });
    let mut design = DMatrix::<f64>::zeros(n, k);
    for (i, r) in xs.iter().enumerate() {
        design[(i, 0)] = 1.0;
        for j in 0..p {
            design[(i, j + 1)] = match &standardization {
                Some(st) => (r[j] - st[j].0) / st[j].1,
                None => r[j],
            };
        }
    }
    let zf: Vec<f64> = z.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let zbar = zf.iter().sum::<f64>() / n as f64;

    let fallback = |iterations| LogisticModel {
        intercept: logit(zbar),
        coef: vec![0.0; p],
        standardization: standardization.clone(),
        status: FitStatus::InterceptFallback,
        iterations,
    };

    let mut beta = DVector::<f64>::zeros(k);
    beta[0] = logit(zbar);
    let mut eta: Vec<f64> = (&design * &beta).iter().copied().collect();
    let mut dev = penalized_deviance(&eta, z, &beta, spec.lambda);
    let mut status = FitStatus::IterationCap;
    let mut iterations = 0;

    for it in 1..=spec.max_iter {
        iterations = it;
        let mut grad = DVector::<f64>::zeros(k);
        let mut hess = DMatrix::<f64>::zeros(k, k);
        for i in 0..n {
            let mu = expit(eta[i]);
            let w = (mu * (1.0 - mu)).max(1e-12);
            let resid = zf[i] - mu;
            let row = design.row(i);
            for a in 0..k {
                let xa = row[a];
                grad[a] += xa * resid;
                let wxa = w * xa;
                for b in a..k {
                    hess[(a, b)] += wxa * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        for a in 1..k {
            grad[a] -= spec.lambda * beta[a];
            hess[(a, a)] += spec.lambda;
        }
        let Some(chol) = hess.cholesky() else {
            log::warn!("logistic IRLS: singular information matrix, using intercept-only fit");
            return fallback(it);
        };
        let step = chol.solve(&grad);
        if step.iter().any(|v| !v.is_finite()) {
            log::warn!("logistic IRLS: non-finite step, using intercept-only fit");
            return fallback(it);
        }

        // Newton step with halving until the penalized deviance does not increase.
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = &beta + &step * scale;
            let cand_eta: Vec<f64> = (&design * &cand).iter().copied().collect();
            let cand_dev = penalized_deviance(&cand_eta, z, &cand, spec.lambda);
            if cand_dev.is_finite() && cand_dev <= dev + 1e-12 * dev.abs() {
                accepted = Some((cand, cand_eta, cand_dev));
                break;
            }
            scale *= 0.5;
        }
        let Some((new_beta, new_eta, new_dev)) = accepted else {
            // No descent direction left: at the optimum up to rounding.
            status = FitStatus::Converged;
            break;
        };
        let change = (dev - new_dev).abs();
        beta = new_beta;
        eta = new_eta;
        dev = new_dev;
        if change < spec.tol * (dev.abs() + 0.1) {
            status = FitStatus::Converged;
            break;
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        log::warn!("logistic IRLS: diverged, using intercept-only fit");
        return fallback(iterations);
    }
    if status == FitStatus::IterationCap {
        log::warn!("logistic IRLS: no convergence in {} iterations", spec.max_iter);
    }
    LogisticModel {
        intercept: beta[0],
        coef: beta.iter().skip(1).copied().collect(),
        standardization,
        status,
        iterations,
    }
}

const STUMP_L2: f64 = 1.0;

fn fit_stumps(spec: &BinaryLearnerSpec, xs: &[&[f64]], z: &[bool]) -> StumpEnsemble {
    let n = xs.len();
    let p = xs[0].len();
    let zf: Vec<f64> = z.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let zbar = zf.iter().sum::<f64>() / n as f64;
    let base = logit(zbar);

    let order: Vec<Vec<usize>> = (0..p)
        .map(|j| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| xs[a][j].total_cmp(&xs[b][j]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mut raw = vec![base; n];
    let mut stumps = Vec::with_capacity(spec.rounds);
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    for _ in 0..spec.rounds {
        for i in 0..n {
            let mu = expit(raw[i]);
            g[i] = mu - zf[i];
            h[i] = mu * (1.0 - mu);
        }
        let gt: f64 = g.iter().sum();
        let ht: f64 = h.iter().sum();
        let root = gt * gt / (ht + STUMP_L2);

        let mut best: Option<(f64, usize, f64, f64, f64, f64, f64)> = None;
        for (j, idx) in order.iter().enumerate() {
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..n - 1 {
                let i = idx[w];
                gl += g[i];
                hl += h[i];
                let (xa, xb) = (xs[i][j], xs[idx[w + 1]][j]);
                if xa == xb {
                    continue;
                }
                let (gr, hr) = (gt - gl, ht - hl);
                if hl < spec.min_child_weight || hr < spec.min_child_weight {
                    continue;
                }
                let gain = gl * gl / (hl + STUMP_L2) + gr * gr / (hr + STUMP_L2) - root;
                if best.as_ref().is_none_or(|b| gain > b.0) {
                    best = Some((gain, j, 0.5 * (xa + xb), gl, hl, gr, hr));
                }
            }
        }
        let stump = match best {
            Some((gain, feature, threshold, gl, hl, gr, hr)) if gain > 0.0 => Stump {
                feature,
                threshold,
                left: -spec.learning_rate * gl / (hl + STUMP_L2),
                right: -spec.learning_rate * gr / (hr + STUMP_L2),
            },
            _ => {
                let v = -spec.learning_rate * gt / (ht + STUMP_L2);
                Stump {
                    feature: 0,
                    threshold: f64::INFINITY,
                    left: v,
                    right: v,
                }
            }
        };
        for i in 0..n {
            raw[i] += if xs[i][stump.feature] <= stump.threshold {
                stump.left
            } else {
                stump.right
            };
        }
        stumps.push(stump);
    }
    StumpEnsemble { base, stumps }
}
