//! The three simulation data-generating processes.
//!
//! All three draw `A ~ Bernoulli(0.5)`, covariates from a population-specific
//! law, and a three-class label `Y` from a multinomial-logit model shared by
//! both populations. The score `s(x, .)` is a deliberately misspecified
//! multinomial-logit model normalized to sum to one.

use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sample::{ObservedSample, ObservedUnit};

/// Probability of drawing a source unit.
pub const GAMMA0: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DgpKind {
    /// 20 exponential covariates, two of them shifted.
    HighDimSparse,
    /// Trivariate normal covariates; the target has half the covariance.
    LowDim,
    /// As `LowDim` with identical covariate laws.
    LowDimNoShift,
}

impl DgpKind {
    pub fn name(self) -> &'static str {
        match self {
            DgpKind::HighDimSparse => "highdim",
            DgpKind::LowDim => "lowdim",
            DgpKind::LowDimNoShift => "lowdim-noshift",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "highdim" => Ok(DgpKind::HighDimSparse),
            "lowdim" => Ok(DgpKind::LowDim),
            "lowdim-noshift" => Ok(DgpKind::LowDimNoShift),
            other => Err(Error::InvalidConfig(format!("unsupported DGP '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Population {
    Source,
    Target,
}

/// A built-in data-generating process. Coefficients are fixed constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
}

struct LowDimFactors {
    chol: Matrix3<f64>,
    precision: Matrix3<f64>,
}

fn lowdim_factors() -> &'static LowDimFactors {
    static F: OnceLock<LowDimFactors> = OnceLock::new();
    F.get_or_init(|| {
        let cov = Matrix3::new(1.0, 0.2, -0.2, 0.2, 1.0, 0.2, -0.2, 0.2, 1.0);
        LowDimFactors {
            chol: cov.cholesky().expect("positive definite").l(),
            precision: cov.try_inverse().expect("invertible"),
        }
    })
}

fn softmax3(l1: f64, l2: f64) -> [f64; 3] {
    let m = l1.max(l2).max(0.0);
    let e = [(-m).exp(), (l1 - m).exp(), (l2 - m).exp()];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

impl DgpSpec {
    pub fn new(kind: DgpKind) -> Self {
        Self { kind }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            DgpKind::HighDimSparse => 20,
            DgpKind::LowDim | DgpKind::LowDimNoShift => 3,
        }
    }

    pub fn draw_x<R: Rng + ?Sized>(&self, population: Population, rng: &mut R) -> Vec<f64> {
        match self.kind {
            DgpKind::HighDimSparse => {
                let shifted =
                    Exp::new(if population == Population::Target { 2.0 } else { 1.0 }).expect("positive rate");
                let unit = Exp::new(1.0).expect("positive rate");
                (0..20)
                    .map(|k| if k < 2 { shifted.sample(rng) } else { unit.sample(rng) })
                    .collect()
            }
            DgpKind::LowDim | DgpKind::LowDimNoShift => {
                let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                let scale = if self.kind == DgpKind::LowDim && population == Population::Target {
                    std::f64::consts::FRAC_1_SQRT_2
                } else {
                    1.0
                };
                let x = lowdim_factors().chol * z * scale;
                x.iter().copied().collect()
            }
        }
    }

    /// `P(Y = y | X = x)` for `y = 0, 1, 2`.
    pub fn label_probs(&self, x: &[f64]) -> [f64; 3] {
        match self.kind {
            DgpKind::HighDimSparse => softmax3(2.0 + 2.0 * x[0] - 1.1 * x[1], -2.1 - 2.0 * x[0] + 1.2 * x[2]),
            DgpKind::LowDim | DgpKind::LowDimNoShift => softmax3(
                1.4 * x[0] + 1.5 * x[1] - 1.5 * x[2] + 0.3 * (1.0 - x[0]).powi(2) + 0.015 * x[1] * x[2],
                -0.1 - 1.3 * x[0] - 2.2 * x[1] + 0.5 * x[2] + 0.5 * (1.0 - x[1]).powi(2) + 0.03 * x[0] * x[2],
            ),
        }
    }

    /// The score `s(x, y)` for `y = 0, 1, 2`; sums to one.
    pub fn scores(&self, x: &[f64]) -> [f64; 3] {
        match self.kind {
            DgpKind::HighDimSparse => softmax3(
                0.02 + 2.1 * x[0] - 0.91 * x[1] + 0.02 * x[3],
                -0.03 - 1.95 * x[0] + 1.25 * x[2] + 0.1 * x[4],
            ),
            DgpKind::LowDim | DgpKind::LowDimNoShift => softmax3(
                0.02 + 1.2 * x[0] + 1.91 * x[1] - 1.6 * x[2],
                -0.03 - 1.5 * x[0] - 2.4 * x[1] + 0.3 * x[2],
            ),
        }
    }

    pub fn draw_label<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> usize {
        let p = self.label_probs(x);
        let u: f64 = rng.random();
        if u < p[0] {
            0
        } else if u < p[0] + p[1] {
            1
        } else {
            2
        }
    }

    /// Likelihood ratio `dP(x | A=0) / dP(x | A=1)`.
    pub fn density_ratio(&self, x: &[f64]) -> f64 {
        match self.kind {
            DgpKind::HighDimSparse => 4.0 * (-x[0] - x[1]).exp(),
            DgpKind::LowDim => {
                let v = Vector3::new(x[0], x[1], x[2]);
                let q = (v.transpose() * lowdim_factors().precision * v)[(0, 0)];
                2f64.powf(1.5) * (-0.5 * q).exp()
            }
            DgpKind::LowDimNoShift => 1.0,
        }
    }

    /// True propensity score `P(A = 1 | X = x)`.
    pub fn propensity(&self, x: &[f64]) -> f64 {
        GAMMA0 / (GAMMA0 + (1.0 - GAMMA0) * self.density_ratio(x))
    }

    /// True conditional coverage error `P(s(x, Y) < tau | X = x)`.
    pub fn cond_error(&self, x: &[f64], tau: f64) -> f64 {
        let p = self.label_probs(x);
        let s = self.scores(x);
        (0..3).filter(|&y| s[y] < tau).map(|y| p[y]).sum()
    }

    /// Draws `n` units; `rng` is consumed in unit order.
    pub fn draw(&self, n: usize, rng: &RngStream) -> Result<ObservedSample> {
        if n == 0 {
            return Err(Error::InvalidArgument("cannot draw an empty sample".into()));
        }
        let mut r = rng.rng();
        let units = (0..n)
            .map(|_| {
                if r.random::<f64>() < GAMMA0 {
                    let x = self.draw_x(Population::Source, &mut r);
                    let y = self.draw_label(&x, &mut r);
                    let s = self.scores(&x)[y];
                    ObservedUnit::source(x, s)
                } else {
                    ObservedUnit::target(self.draw_x(Population::Target, &mut r))
                }
            })
            .collect();
        ObservedSample::new(units)
    }
}

/// Draws a sample from a built-in DGP.
pub fn dgp_draw(spec: &DgpSpec, n: usize, rng: &RngStream) -> Result<ObservedSample> {
    spec.draw(n, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OracleTarget {
    Propensity,
    CondError { tau: f64 },
}

/// A true nuisance function, usable wherever a fitted predictor is expected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleFunction {
    pub dgp: DgpSpec,
    pub target: OracleTarget,
}

impl OracleFunction {
    pub fn dim(&self) -> usize {
        self.dgp.dim()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self.target {
            OracleTarget::Propensity => self.dgp.propensity(x),
            OracleTarget::CondError { tau } => self.dgp.cond_error(x, tau),
        }
    }

    /// Scores lie strictly inside (0, 1), so extreme thresholds give constants.
    pub fn as_constant(&self) -> Option<f64> {
        match self.target {
            OracleTarget::Propensity => (self.dgp.kind == DgpKind::LowDimNoShift).then_some(GAMMA0),
            OracleTarget::CondError { tau } if tau <= 0.0 => Some(0.0),
            OracleTarget::CondError { tau } if tau > 1.0 => Some(1.0),
            OracleTarget::CondError { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Purpose;

    #[test]
    fn highdim_at_origin() {
        let d = DgpSpec::new(DgpKind::HighDimSparse);
        let x = vec![0.0; 20];
        // Independent evaluation of the two log-odds equations at x = 0.
        let (r1, r2) = (2f64.exp(), (-2.1f64).exp());
        let expect = [1.0 / (1.0 + r1 + r2), r1 / (1.0 + r1 + r2), r2 / (1.0 + r1 + r2)];
        let p = d.label_probs(&x);
        for k in 0..3 {
            assert!((p[k] - expect[k]).abs() < 1e-12);
        }
        assert!((p[0] - 0.1175).abs() < 5e-5 && (p[1] - 0.8681).abs() < 5e-5 && (p[2] - 0.0144).abs() < 5e-5);
        let s = d.scores(&x);
        let (e1, e2) = (0.02f64.exp(), (-0.03f64).exp());
        let tot = 1.0 + e1 + e2;
        assert!((s[0] - 1.0 / tot).abs() < 1e-12 && (s[1] - e1 / tot).abs() < 1e-12 && (s[2] - e2 / tot).abs() < 1e-12);
        assert!((s[0] - 0.3344).abs() < 1e-4 && (s[1] - 0.3412).abs() < 1e-4 && (s[2] - 0.3245).abs() < 1e-4);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        // Target density 2e^{-2x} per shifted coordinate vs source e^{-x}.
        assert!((d.density_ratio(&x) - 4.0).abs() < 1e-15);
        assert!((d.propensity(&x) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn lowdim_density_ratio_matches_gaussian_densities() {
        let d = DgpSpec::new(DgpKind::LowDim);
        let cov = Matrix3::new(1.0, 0.2, -0.2, 0.2, 1.0, 0.2, -0.2, 0.2, 1.0);
        let dens = |x: &Vector3<f64>, c: Matrix3<f64>| {
            let inv = c.try_inverse().unwrap();
            let q = (x.transpose() * inv * x)[(0, 0)];
            (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powi(3) * c.determinant()).sqrt()
        };
        for x in [[0.0, 0.0, 0.0], [0.3, -1.2, 0.8], [2.0, 1.0, -0.5]] {
            let v = Vector3::new(x[0], x[1], x[2]);
            let ratio = dens(&v, cov * 0.5) / dens(&v, cov);
            assert!((d.density_ratio(&x) - ratio).abs() < 1e-12 * ratio.max(1.0));
        }
        assert!((d.density_ratio(&[0.0; 3]) - 2f64.powf(1.5)).abs() < 1e-12);
        assert_eq!(DgpSpec::new(DgpKind::LowDimNoShift).propensity(&[1.0, 2.0, 3.0]), 0.5);
    }

    #[test]
    fn covariance_of_draws() {
        for (kind, target_scale) in [(DgpKind::LowDim, 0.5), (DgpKind::LowDimNoShift, 1.0)] {
            let d = DgpSpec::new(kind);
            let mut r = RngStream::new(3, Purpose::DgpDraw, 0).rng();
            let m = 100_000;
            for (pop, scale) in [(Population::Source, 1.0), (Population::Target, target_scale)] {
                let mut c = [[0.0; 3]; 3];
                for _ in 0..m {
                    let x = d.draw_x(pop, &mut r);
                    for i in 0..3 {
                        for j in 0..3 {
                            c[i][j] += x[i] * x[j] / m as f64;
                        }
                    }
                }
                let cov = [[1.0, 0.2, -0.2], [0.2, 1.0, 0.2], [-0.2, 0.2, 1.0]];
                for i in 0..3 {
                    for j in 0..3 {
                        assert!((c[i][j] - scale * cov[i][j]).abs() < 0.02, "{kind:?} {pop:?} {i}{j}");
                    }
                }
            }
        }
    }

    #[test]
    fn draws_are_reproducible_and_scored() {
        let d = DgpSpec::new(DgpKind::HighDimSparse);
        let rng = RngStream::new(9, Purpose::DgpDraw, 1);
        let a = d.draw(300, &rng).unwrap();
        assert_eq!(a, d.draw(300, &rng).unwrap());
        assert_eq!(a.dim(), 20);
        for u in a.units() {
            if let Some(s) = u.score() {
                assert!(d.scores(u.x()).contains(&s));
            }
        }
        let frac = a.n_source() as f64 / a.len() as f64;
        assert!((frac - 0.5).abs() < 0.1);
    }

    #[test]
    fn oracle_constants() {
        let d = DgpSpec::new(DgpKind::LowDim);
        let lo = OracleFunction {
            dgp: d,
            target: OracleTarget::CondError { tau: 0.0 },
        };
        let hi = OracleFunction {
            dgp: d,
            target: OracleTarget::CondError { tau: 1.5 },
        };
        assert_eq!(lo.as_constant(), Some(0.0));
        assert_eq!(hi.as_constant(), Some(1.0));
        assert_eq!(hi.eval(&[0.1, 0.2, 0.3]), 1.0);
        assert_eq!(lo.eval(&[0.1, 0.2, 0.3]), 0.0);
    }
}
