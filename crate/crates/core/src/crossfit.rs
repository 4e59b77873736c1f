//! Cross-fitted nuisance functions.
//!
//! For each fold `v` the propensity `g` is fit on every unit outside `v`
//! (label `a`), and for each threshold the conditional coverage error `E_tau`
//! is fit on the source units outside `v` (label `Z_tau`). Propensity outputs
//! are clipped to `[delta, 1 - delta]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folds::FoldPlan;
use crate::learners::{fit_binary, BinaryLearnerSpec, FitStatus, FittedPredictor};
use crate::rng::{Purpose, RngStream};
use crate::sample::{ObservedSample, ThresholdGrid};
use crate::simbench::dgp::{DgpSpec, OracleFunction, OracleTarget};

/// Likelihood ratio from a propensity and a source fraction,
/// `((1 - g) / g) * (gamma / (1 - gamma))`.
pub fn odds_weight(g: f64, gamma: f64) -> Result<f64> {
    if !(g > 0.0 && g < 1.0) {
        return Err(Error::Domain(format!("propensity {g} outside (0, 1)")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("source fraction {gamma} outside (0, 1)")));
    }
    Ok(odds_weight_unchecked(g, gamma))
}

#[inline]
pub(crate) fn odds_weight_unchecked(g: f64, gamma: f64) -> f64 {
    ((1.0 - g) / g) * (gamma / (1.0 - gamma))
}

/// Order-independent fingerprint of an index set.
pub fn index_fingerprint(indices: &[usize]) -> u64 {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    // FNV-1a over the little-endian bytes
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for i in sorted {
        for b in (i as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceFits {
    taus: Vec<f64>,
    delta: f64,
    /// One entry per fold, or a single fold-independent entry.
    g: Vec<FittedPredictor>,
    /// `e[v][t]` for fold `v` and threshold index `t`.
    e: Vec<Vec<FittedPredictor>>,
    g_train: Vec<Vec<usize>>,
    e_train: Vec<Vec<usize>>,
}

impl NuisanceFits {
    /// Assembles fits from predictors built elsewhere. `g` holds one
    /// predictor per fold (or one shared predictor) and `e[v]` one per
    /// threshold.
    pub fn from_parts(
        taus: Vec<f64>,
        delta: f64,
        g: Vec<FittedPredictor>,
        e: Vec<Vec<FittedPredictor>>,
    ) -> Result<Self> {
        if g.is_empty() || g.len() != e.len() || e.iter().any(|r| r.len() != taus.len()) {
            return Err(Error::InvalidArgument("inconsistent nuisance shapes".into()));
        }
        if !(0.0..0.5).contains(&delta) {
            return Err(Error::InvalidConfig(format!(
                "truncation delta {delta} outside [0, 0.5)"
            )));
        }
        Ok(Self {
            taus,
            delta,
            g,
            e,
            g_train: Vec::new(),
            e_train: Vec::new(),
        })
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// True when the same predictors serve every fold.
    pub fn is_fold_independent(&self) -> bool {
        self.g.len() == 1
    }

    fn slot(&self, v: usize) -> usize {
        if self.g.len() == 1 {
            0
        } else {
            v
        }
    }

    pub fn g_predictor(&self, v: usize) -> &FittedPredictor {
        &self.g[self.slot(v)]
    }

    pub fn e_predictor(&self, v: usize, t: usize) -> &FittedPredictor {
        &self.e[self.slot(v)][t]
    }

    /// Truncated out-of-fold propensity at `x`.
    pub fn propensity(&self, v: usize, x: &[f64]) -> f64 {
        clip(self.g_predictor(v).prob(x), self.delta)
    }

    pub fn cond_error(&self, v: usize, t: usize, x: &[f64]) -> f64 {
        self.e_predictor(v, t).prob(x).clamp(0.0, 1.0)
    }

    /// Indices used to fit the propensity for fold `v` (empty for oracles).
    pub fn g_training_indices(&self, v: usize) -> &[usize] {
        self.g_train.get(v).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Indices used to fit every `E_tau` for fold `v` (empty for oracles).
    pub fn e_training_indices(&self, v: usize) -> &[usize] {
        self.e_train.get(v).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Number of logistic fits that stopped at the iteration cap or fell
    /// back to an intercept-only model.
    pub fn learner_warnings(&self) -> usize {
        self.g
            .iter()
            .chain(self.e.iter().flatten())
            .filter(|p| matches!(p.status(), Some(FitStatus::IterationCap | FitStatus::InterceptFallback)))
            .count()
    }
}

fn clip(g: f64, delta: f64) -> f64 {
    g.clamp(delta, 1.0 - delta)
}

/// Fits the propensity and per-threshold coverage-error predictors out of
/// fold. Fits for distinct `(fold, tau)` pairs run in parallel.
pub fn fit_nuisances(
    sample: &ObservedSample,
    folds: &FoldPlan,
    grid: &ThresholdGrid,
    g_spec: &BinaryLearnerSpec,
    e_spec: &BinaryLearnerSpec,
    delta: f64,
    rng: &RngStream,
) -> Result<NuisanceFits> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidConfig(format!(
            "truncation delta {delta} outside (0, 0.5)"
        )));
    }
    if folds.n() != sample.len() {
        return Err(Error::DimensionMismatch {
            expected: sample.len(),
            got: folds.n(),
        });
    }
    let nv = folds.n_folds();
    let taus = grid.taus().to_vec();
    let learner_rng = rng.with_purpose(Purpose::LearnerInit);

    let mut g_train = Vec::with_capacity(nv);
    let mut e_train = Vec::with_capacity(nv);
    for v in 0..nv {
        let comp = folds.complement(v);
        let src: Vec<usize> = comp.iter().copied().filter(|&i| sample.unit(i).is_source()).collect();
        if src.is_empty() || comp.len() < 2 {
            return Err(Error::UnfittableFold {
                fold: v,
                reason: format!("{} units and {} source units outside the fold", comp.len(), src.len()),
            });
        }
        g_train.push(comp);
        e_train.push(src);
    }

    let g: Vec<FittedPredictor> = (0..nv)
        .into_par_iter()
        .map(|v| {
            let xs: Vec<&[f64]> = g_train[v].iter().map(|&i| sample.unit(i).x()).collect();
            let z: Vec<bool> = g_train[v].iter().map(|&i| sample.unit(i).is_source()).collect();
            fit_binary(g_spec, &xs, &z, &learner_rng.substream(v as u64))
        })
        .collect::<Result<_>>()?;

    let nt = taus.len();
    let flat: Vec<FittedPredictor> = (0..nv * nt)
        .into_par_iter()
        .map(|k| {
            let (v, t) = (k / nt, k % nt);
            let units: Vec<_> = e_train[v].iter().map(|&i| sample.unit(i)).collect();
            let xs: Vec<&[f64]> = units.iter().map(|u| u.x()).collect();
            let z: Vec<bool> = units.iter().map(|u| u.miscovered(taus[t]) == Some(1)).collect();
            fit_binary(e_spec, &xs, &z, &learner_rng.substream((nv + k) as u64))
        })
        .collect::<Result<_>>()?;
    let mut e = Vec::with_capacity(nv);
    let mut it = flat.into_iter();
    for _ in 0..nv {
        e.push(it.by_ref().take(nt).collect());
    }

    Ok(NuisanceFits {
        taus,
        delta,
        g,
        e,
        g_train,
        e_train,
    })
}

/// The true nuisance functions of a built-in DGP, shared by every fold.
/// No truncation is applied.
pub fn oracle_nuisances(dgp: &DgpSpec, grid: &ThresholdGrid) -> Result<NuisanceFits> {
    let g = FittedPredictor::Oracle(OracleFunction {
        dgp: *dgp,
        target: OracleTarget::Propensity,
    });
    let e = grid
        .taus()
        .iter()
        .map(|&tau| {
            let f = OracleFunction {
                dgp: *dgp,
                target: OracleTarget::CondError { tau },
            };
            match f.as_constant() {
                Some(c) => FittedPredictor::Constant(c),
                None => FittedPredictor::Oracle(f),
            }
        })
        .collect();
    Ok(NuisanceFits {
        taus: grid.taus().to_vec(),
        delta: 0.0,
        g: vec![g],
        e: vec![e],
        g_train: Vec::new(),
        e_train: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::folds::make_folds;
    use crate::simbench::dgp::DgpKind;

    #[test]
    fn odds_weight_examples() {
        assert_eq!(odds_weight(0.5, 0.5).unwrap(), 1.0);
        assert!((odds_weight(0.8, 0.5).unwrap() - 0.25).abs() < 1e-15);
        assert!((odds_weight(0.2, 0.5).unwrap() - 4.0).abs() < 1e-15);
        assert!(odds_weight(0.0, 0.5).is_err());
        assert!(odds_weight(1.0, 0.5).is_err());
        assert!(odds_weight(0.5, 1.0).is_err());
    }

    fn sample(seed: u64) -> ObservedSample {
        DgpSpec::new(DgpKind::LowDim)
            .draw(400, &RngStream::new(seed, Purpose::DgpDraw, 0))
            .unwrap()
    }

    #[test]
    fn extreme_thresholds_give_constants() {
        let s = sample(1);
        let folds = make_folds(s.len(), 2, &RngStream::new(1, Purpose::Folds, 0)).unwrap();
        let grid = ThresholdGrid::new(vec![-1.0, 2.0]).unwrap();
        let spec = BinaryLearnerSpec::default();
        let fits = fit_nuisances(
            &s,
            &folds,
            &grid,
            &spec,
            &spec,
            0.01,
            &RngStream::new(1, Purpose::User, 0),
        )
        .unwrap();
        for v in 0..2 {
            assert_eq!(fits.e_predictor(v, 0), &FittedPredictor::Constant(0.0));
            assert_eq!(fits.e_predictor(v, 1), &FittedPredictor::Constant(1.0));
        }
    }

    #[test]
    fn cross_fit_independence_and_truncation() {
        let s = sample(2);
        let folds = make_folds(s.len(), 3, &RngStream::new(2, Purpose::Folds, 0)).unwrap();
        let grid = ThresholdGrid::default_grid();
        let spec = BinaryLearnerSpec::default();
        let delta = 0.3;
        let fits = fit_nuisances(
            &s,
            &folds,
            &grid,
            &spec,
            &spec,
            delta,
            &RngStream::new(2, Purpose::User, 0),
        )
        .unwrap();
        for v in 0..3 {
            let comp = folds.complement(v);
            assert_eq!(index_fingerprint(fits.g_training_indices(v)), index_fingerprint(&comp));
            for &i in folds.indices(v) {
                assert!(!fits.g_training_indices(v).contains(&i));
                assert!(!fits.e_training_indices(v).contains(&i));
                let g = fits.propensity(v, s.unit(i).x());
                assert!((delta..=1.0 - delta).contains(&g));
            }
            assert!(fits.e_training_indices(v).iter().all(|&i| s.unit(i).is_source()));
        }
    }

    #[test]
    fn clipping_to_delta() {
        assert_eq!(clip(0.001, 0.01), 0.01);
        assert_eq!(clip(0.999, 0.01), 0.99);
        assert_eq!(clip(0.4, 0.01), 0.4);
    }

    #[test]
    fn unfittable_fold() {
        // every source unit sits in fold 0, so fold 0's complement has none
        let units = vec![
            crate::sample::ObservedUnit::source(vec![0.0], 0.5),
            crate::sample::ObservedUnit::source(vec![1.0], 0.5),
            crate::sample::ObservedUnit::target(vec![0.0]),
            crate::sample::ObservedUnit::target(vec![1.0]),
        ];
        let s = ObservedSample::new(units).unwrap();
        let folds = FoldPlan::from_labels(vec![0, 0, 1, 1], 2).unwrap();
        let spec = BinaryLearnerSpec::default();
        let err = fit_nuisances(
            &s,
            &folds,
            &ThresholdGrid::default_grid(),
            &spec,
            &spec,
            0.01,
            &RngStream::new(0, Purpose::User, 0),
        );
        assert!(matches!(err, Err(Error::UnfittableFold { fold: 0, .. })));
    }

    #[test]
    fn oracle_values() {
        let grid = ThresholdGrid::default_grid();
        let fits = oracle_nuisances(&DgpSpec::new(DgpKind::LowDimNoShift), &grid).unwrap();
        assert_eq!(fits.propensity(0, &[0.3, 0.1, -2.0]), 0.5);
        assert_eq!(fits.e_predictor(1, 0), &FittedPredictor::Constant(0.0));
        let hd = oracle_nuisances(&DgpSpec::new(DgpKind::HighDimSparse), &grid).unwrap();
        assert!((hd.propensity(0, &[0.0; 20]) - 0.2).abs() < 1e-15);
        let x = [0.4; 20];
        let d = DgpSpec::new(DgpKind::HighDimSparse);
        let (p, sc) = (d.label_probs(&x), d.scores(&x));
        let manual: f64 = (0..3).filter(|&y| sc[y] < 0.3).map(|y| p[y]).sum();
        assert_eq!(hd.cond_error(0, 6, &x), manual);
    }
}
