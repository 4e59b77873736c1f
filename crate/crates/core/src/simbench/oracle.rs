//! Monte Carlo ground truth for the built-in DGPs.
//!
//! The coverage error integrates the label analytically given each covariate
//! draw; the optimal threshold uses sampled labels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::simbench::dgp::{DgpSpec, Population};
use crate::stats::empirical_quantile_sorted;

pub const DEFAULT_ORACLE_M: usize = 100_000;

/// Covariate draws from one population with their label probabilities and
/// scores.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSample {
    dim: usize,
    xs: Vec<f64>,
    probs: Vec<[f64; 3]>,
    scores: Vec<[f64; 3]>,
}

impl OracleSample {
    pub fn draw(spec: &DgpSpec, population: Population, m: usize, rng: &RngStream) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("oracle needs at least one draw".into()));
        }
        let dim = spec.dim();
        let mut r = rng.rng();
        let mut xs = Vec::with_capacity(m * dim);
        for _ in 0..m {
            xs.extend(spec.draw_x(population, &mut r));
        }
        let (probs, scores) = xs
            .par_chunks(dim)
            .map(|x| (spec.label_probs(x), spec.scores(x)))
            .unzip();
        Ok(Self { dim, xs, probs, scores })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn x(&self, j: usize) -> &[f64] {
        &self.xs[j * self.dim..(j + 1) * self.dim]
    }

    pub fn curve(&self) -> OracleCurve {
        let mut pairs: Vec<(f64, f64)> = self
            .scores
            .iter()
            .zip(&self.probs)
            .flat_map(|(s, p)| (0..3).map(move |y| (s[y], p[y])))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cum = Vec::with_capacity(pairs.len() + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for &(_, p) in &pairs {
            acc += p;
            cum.push(acc);
        }
        OracleCurve {
            scores: pairs.into_iter().map(|(s, _)| s).collect(),
            cum,
        }
    }

    /// Coverage error of a covariate-dependent cutoff `t(x)`:
    /// the mean over draws of `sum_y p(y|x) 1{s(x,y) < t(x)}`.
    pub fn coverage_error_with<F>(&self, cutoff: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let per: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map(|j| {
                let t = cutoff(self.x(j));
                (0..3)
                    .filter(|&y| self.scores[j][y] < t)
                    .map(|y| self.probs[j][y])
                    .sum()
            })
            .collect();
        per.iter().sum::<f64>() / per.len() as f64
    }
}

/// Coverage error as a function of the threshold, for one set of draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCurve {
    scores: Vec<f64>,
    /// `cum[k]` is the probability mass of the `k` smallest scores.
    cum: Vec<f64>,
}

impl OracleCurve {
    pub fn psi(&self, tau: f64) -> f64 {
        let k = self.scores.partition_point(|&s| s < tau);
        self.cum[k] / self.cum[self.scores.len()]
    }
}

/// True target coverage error at `tau` from `m` covariate draws.
pub fn oracle_psi(spec: &DgpSpec, tau: f64, m: usize, rng: &RngStream) -> Result<f64> {
    Ok(OracleSample::draw(spec, Population::Target, m, rng)?.curve().psi(tau))
}

/// Empirical `alpha`-quantile of `s(X, Y)` over `m` draws from `population`.
pub fn oracle_tau0(spec: &DgpSpec, alpha: f64, m: usize, rng: &RngStream, population: Population) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("oracle needs at least one draw".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("quantile level {alpha} outside [0, 1]")));
    }
    let mut r = rng.rng();
    let mut s: Vec<f64> = (0..m)
        .map(|_| {
            let x = spec.draw_x(population, &mut r);
            let y = spec.draw_label(&x, &mut r);
            spec.scores(&x)[y]
        })
        .collect();
    s.sort_by(f64::total_cmp);
    Ok(empirical_quantile_sorted(&s, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Purpose;
    use crate::simbench::dgp::DgpKind;

    #[test]
    fn extremes_and_monotone() {
        let d = DgpSpec::new(DgpKind::LowDim);
        let os = OracleSample::draw(&d, Population::Target, 5000, &RngStream::new(1, Purpose::Oracle, 0)).unwrap();
        let c = os.curve();
        assert_eq!(c.psi(-0.1), 0.0);
        assert_eq!(c.psi(0.0), 0.0);
        assert_eq!(c.psi(1.1), 1.0);
        let mut prev = 0.0;
        for k in 0..=40 {
            let p = c.psi(k as f64 * 0.025);
            assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn curve_matches_direct_sum() {
        let d = DgpSpec::new(DgpKind::HighDimSparse);
        let os = OracleSample::draw(&d, Population::Target, 2000, &RngStream::new(2, Purpose::Oracle, 0)).unwrap();
        let c = os.curve();
        for &tau in &[0.05, 0.1, 0.2, 0.3] {
            let direct: f64 = (0..os.len()).map(|j| d.cond_error(os.x(j), tau)).sum::<f64>() / os.len() as f64;
            assert!((c.psi(tau) - direct).abs() < 1e-12);
            assert!((os.coverage_error_with(|_| tau) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn tau0_extremes() {
        let d = DgpSpec::new(DgpKind::LowDim);
        let rng = RngStream::new(3, Purpose::Oracle, 0);
        let lo = oracle_tau0(&d, 0.0, 500, &rng, Population::Target).unwrap();
        let hi = oracle_tau0(&d, 1.0, 500, &rng, Population::Target).unwrap();
        let mid = oracle_tau0(&d, 0.5, 500, &rng, Population::Target).unwrap();
        assert!(lo <= mid && mid <= hi);
        // the same stream replays the same draws
        let mut r = rng.rng();
        let all: Vec<f64> = (0..500)
            .map(|_| {
                let x = d.draw_x(Population::Target, &mut r);
                let y = d.draw_label(&x, &mut r);
                d.scores(&x)[y]
            })
            .collect();
        assert_eq!(lo, all.iter().copied().fold(f64::INFINITY, f64::min));
        assert_eq!(hi, all.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
}
