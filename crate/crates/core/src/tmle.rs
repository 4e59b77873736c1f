//! Cross-validated targeted estimator of the target coverage error.
//!
//! Per fold and threshold, the out-of-fold conditional-error fit is
//! fluctuated along the likelihood-ratio weight by a one-parameter logistic
//! model with offset, fit on the in-fold source units. The fluctuated
//! predictor's mean over in-fold target units is the fold estimate, which
//! therefore lies in `[0, 1]`. Numerical trouble switches to a linear
//! fluctuation fit by least squares.

use serde::{Deserialize, Serialize};

use crate::crossfit::NuisanceFits;
use crate::error::{Error, Result};
use crate::folds::FoldPlan;
use crate::onestep::{assemble, check_grid, fold_views, FoldEstimate, FoldView};
use crate::sample::{ObservedSample, RiskTargets, ThresholdGrid};
use crate::stats::{expit, logit};
use crate::table::CoverageTable;

pub const LOGIT_CLAMP: f64 = 1e-6;
pub const NEWTON_MAX_ITER: usize = 100;
pub const NEWTON_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetingPath {
    /// The initial fit is constantly 0 or 1 and is left unchanged.
    Constant,
    Logistic,
    LeastSquares,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetedFit {
    pub fold: usize,
    pub tau: f64,
    pub beta: f64,
    pub path: TargetingPath,
    pub iterations: usize,
}

impl TargetedFit {
    /// Fluctuated prediction from the initial prediction `e` and weight `w`.
    /// Least-squares values are not clipped.
    pub fn apply(&self, e: f64, w: f64) -> f64 {
        match self.path {
            TargetingPath::Constant => e,
            TargetingPath::Logistic => expit(logit(e.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP)) + self.beta * w),
            TargetingPath::LeastSquares => e + self.beta * w,
        }
    }
}

/// Solves the one-parameter targeting problem for `(e, w, z)` on the in-fold
/// source units. `n_fold` scales the convergence check.
fn solve(e: &[f64], w: &[f64], z: &[f64], n_fold: usize) -> (TargetingPath, f64, usize) {
    let least_squares = || {
        let num: f64 = e.iter().zip(w).zip(z).map(|((ei, wi), zi)| wi * (zi - ei)).sum();
        let den: f64 = w.iter().map(|wi| wi * wi).sum();
        let beta = if den > 0.0 { num / den } else { 0.0 };
        (TargetingPath::LeastSquares, beta, 0)
    };
    if e.iter().any(|&ei| ei <= 0.0 || ei >= 1.0) {
        return least_squares();
    }
    let off: Vec<f64> = e
        .iter()
        .map(|&ei| logit(ei.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP)))
        .collect();
    let loglik = |b: f64| -> f64 {
        off.iter()
            .zip(w)
            .zip(z)
            .map(|((o, wi), zi)| {
                let eta = o + b * wi;
                // log expit(eta) = -ln(1+e^-eta); log(1-expit) = -ln(1+e^eta)
                let lp = -((-eta).exp().ln_1p());
                let lq = -(eta.exp().ln_1p());
                zi * if lp.is_finite() { lp } else { eta } + (1.0 - zi) * if lq.is_finite() { lq } else { -eta }
            })
            .sum()
    };

    let mut beta = 0.0;
    for it in 0..NEWTON_MAX_ITER {
        let mut score = 0.0;
        let mut info = 0.0;
        for ((o, wi), zi) in off.iter().zip(w).zip(z) {
            let p = expit(o + beta * wi);
            score += wi * (zi - p);
            info += wi * wi * p * (1.0 - p);
        }
        if !score.is_finite() || !info.is_finite() {
            return least_squares();
        }
        if score.abs() / n_fold as f64 <= NEWTON_TOL {
            return (TargetingPath::Logistic, beta, it);
        }
        if info <= 0.0 {
            return least_squares();
        }
        let mut step = score / info;
        let base = loglik(beta);
        let mut halvings = 0;
        while loglik(beta + step) < base && halvings < 40 {
            step *= 0.5;
            halvings += 1;
        }
        beta += step;
        if !beta.is_finite() {
            return least_squares();
        }
    }
    least_squares()
}

fn target_view(
    sample: &ObservedSample,
    v: usize,
    t: usize,
    fv: &FoldView,
    fits: &NuisanceFits,
    e: &[f64],
) -> Result<TargetedFit> {
    let tau = fits.taus()[t];
    if let Some(c) = fits.e_predictor(v, t).as_constant() {
        if c == 0.0 || c == 1.0 {
            return Ok(TargetedFit {
                fold: v,
                tau,
                beta: 0.0,
                path: TargetingPath::Constant,
                iterations: 0,
            });
        }
    }
    let (mut es, mut ws, mut zs) = (Vec::new(), Vec::new(), Vec::new());
    for (k, &i) in fv.idx.iter().enumerate() {
        if let Some(zi) = sample.unit(i).miscovered(tau) {
            es.push(e[k]);
            ws.push(fv.w[k]);
            zs.push(zi as f64);
        }
    }
    if es.is_empty() {
        return Err(Error::Internal(format!("fold {v} has no source units to target on")));
    }
    let (path, beta, iterations) = solve(&es, &ws, &zs, fv.idx.len());
    Ok(TargetedFit {
        fold: v,
        tau,
        beta,
        path,
        iterations,
    })
}

/// Targets the fit for fold `v` and threshold index `t`.
pub fn target_fold(
    sample: &ObservedSample,
    folds: &FoldPlan,
    v: usize,
    t: usize,
    fits: &NuisanceFits,
) -> Result<TargetedFit> {
    let views = fold_views(sample, folds, fits)?;
    let fv = views
        .get(v)
        .ok_or_else(|| Error::InvalidArgument(format!("fold {v} out of range")))?;
    if t >= fits.taus().len() {
        return Err(Error::InvalidArgument(format!("threshold index {t} out of range")));
    }
    let e: Vec<f64> = fv
        .idx
        .iter()
        .map(|&i| fits.cond_error(v, t, sample.unit(i).x()))
        .collect();
    target_view(sample, v, t, fv, fits, &e)
}

/// Targeted estimates plus every per-(fold, threshold) fluctuation.
pub fn tmle_estimate_detailed(
    sample: &ObservedSample,
    folds: &FoldPlan,
    grid: &ThresholdGrid,
    fits: &NuisanceFits,
    targets: &RiskTargets,
) -> Result<(CoverageTable, Vec<TargetedFit>)> {
    check_grid(grid, fits)?;
    let views = fold_views(sample, folds, fits)?;
    let taus = grid.taus();
    let nv = views.len();
    let collected = std::sync::Mutex::new(vec![None; nv * taus.len()]);

    let mut table = assemble("tmle", sample, &views, taus, targets, |v, t, fv| {
        let tau = taus[t];
        let e: Vec<f64> = fv
            .idx
            .iter()
            .map(|&i| fits.cond_error(v, t, sample.unit(i).x()))
            .collect();
        let tf = target_view(sample, v, t, fv, fits, &e)?;
        let et: Vec<f64> = e.iter().zip(&fv.w).map(|(&ei, &wi)| tf.apply(ei, wi)).collect();

        let (mut raw, mut clipped, mut plugin) = (0.0, 0.0, 0.0);
        for (k, &i) in fv.idx.iter().enumerate() {
            if !sample.unit(i).is_source() {
                raw += et[k];
                clipped += et[k].clamp(0.0, 1.0);
                plugin += e[k];
            }
        }
        let nt = fv.n_target as f64;
        let (raw, clipped, plugin) = (raw / nt, clipped / nt, plugin / nt);
        let gamma = fv.gamma;
        let mut sq = 0.0;
        for (k, &i) in fv.idx.iter().enumerate() {
            let d = match sample.unit(i).miscovered(tau) {
                Some(zi) => fv.w[k] / gamma * (zi as f64 - et[k]),
                None => (et[k] - raw) / (1.0 - gamma),
            };
            sq += d * d;
        }
        collected.lock().expect("poisoned")[v * taus.len() + t] = Some(tf);
        Ok(FoldEstimate {
            psi: clipped,
            plugin,
            sigma2: sq / fv.idx.len() as f64,
        })
    })?;

    let fits_out: Vec<TargetedFit> = collected
        .into_inner()
        .expect("poisoned")
        .into_iter()
        .map(|f| f.expect("every fold and threshold targeted"))
        .collect();
    for f in &fits_out {
        if f.path == TargetingPath::LeastSquares {
            table
                .flags
                .push(format!("least-squares fallback: fold {} tau {}", f.fold, f.tau));
        }
    }
    Ok((table, fits_out))
}

/// Targeted estimates, standard errors and CUBs.
pub fn tmle_estimate(
    sample: &ObservedSample,
    folds: &FoldPlan,
    grid: &ThresholdGrid,
    fits: &NuisanceFits,
    targets: &RiskTargets,
) -> Result<CoverageTable> {
    tmle_estimate_detailed(sample, folds, grid, fits, targets).map(|(t, _)| t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn already_solved_gives_zero() {
        // two units, W = 1, E = 0.5, Z = (1, 0): score 2(0.5 - expit(b)) = 0
        let (path, beta, _) = solve(&[0.5, 0.5], &[1.0, 1.0], &[1.0, 0.0], 2);
        assert_eq!(path, TargetingPath::Logistic);
        assert!(beta.abs() < 1e-12);
    }

    #[test]
    fn all_ones_pushes_up() {
        // Z = 1 everywhere: the score only vanishes as beta grows
        let (_, beta, _) = solve(&[0.2, 0.4, 0.6], &[1.0, 2.0, 0.5], &[1.0, 1.0, 1.0], 3);
        assert!(beta > 0.0);
        let (path, beta, _) = solve(&[0.2, 0.4, 0.6], &[1.0, 2.0, 0.5], &[1.0, 1.0, 0.0], 3);
        assert_eq!(path, TargetingPath::Logistic);
        assert!(beta.is_finite());
    }

    #[test]
    fn score_equation_after_newton() {
        let e = [0.1, 0.3, 0.5, 0.7, 0.2, 0.05];
        let w = [0.5, 1.5, 2.0, 0.7, 3.0, 1.1];
        let z = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let (path, beta, _) = solve(&e, &w, &z, 6);
        assert_eq!(path, TargetingPath::Logistic);
        let tf = TargetedFit {
            fold: 0,
            tau: 0.1,
            beta,
            path,
            iterations: 0,
        };
        let s: f64 = (0..6).map(|k| w[k] * (z[k] - tf.apply(e[k], w[k]))).sum();
        assert!(s.abs() / 6.0 <= 1e-10);
    }

    #[test]
    fn boundary_values_use_least_squares() {
        let (path, beta, _) = solve(&[0.0, 0.5], &[1.0, 1.0], &[1.0, 0.0], 2);
        assert_eq!(path, TargetingPath::LeastSquares);
        // (1*(1-0) + 1*(0-0.5)) / 2
        assert!((beta - 0.25).abs() < 1e-15);
    }
}
