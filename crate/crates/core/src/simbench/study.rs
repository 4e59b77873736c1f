//! Replication harness: draw, estimate with every requested method, score the
//! selected threshold against the oracle, aggregate.

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{inductive_cp_threshold, CalibrationSet, WeightedCalibration};
use crate::crossfit::{fit_nuisances, odds_weight_unchecked, NuisanceFits};
use crate::error::{Error, Result};
use crate::folds::{make_folds, FoldPlan};
use crate::learners::BinaryLearnerSpec;
use crate::onestep::{onestep_estimate, plugin_estimate, select_threshold, weighted_plugin_estimate};
use crate::rejsamp::{rs_estimate, rs_prepare, BoundRule, RsConfig};
use crate::rng::{Purpose, RngStream};
use crate::sample::{ObservedSample, RiskTargets, ThresholdGrid};
use crate::simbench::dgp::{DgpSpec, Population};
use crate::simbench::oracle::{oracle_tau0, OracleCurve, OracleSample, DEFAULT_ORACLE_M};
use crate::stats::wilson_interval;
use crate::table::CoverageTable;
use crate::tmle::tmle_estimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "onestep")]
    OneStep,
    #[serde(rename = "tmle")]
    Tmle,
    #[serde(rename = "rs")]
    Rs,
    #[serde(rename = "plugin")]
    Plugin,
    #[serde(rename = "wplugin")]
    WeightedPlugin,
    #[serde(rename = "icp")]
    InductiveCp,
    #[serde(rename = "wcp")]
    WeightedCp,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::OneStep,
        Method::Tmle,
        Method::Rs,
        Method::Plugin,
        Method::WeightedPlugin,
        Method::InductiveCp,
        Method::WeightedCp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::OneStep => "onestep",
            Method::Tmle => "tmle",
            Method::Rs => "rs",
            Method::Plugin => "plugin",
            Method::WeightedPlugin => "wplugin",
            Method::InductiveCp => "icp",
            Method::WeightedCp => "wcp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method '{s}'")))
    }

    /// Whether the method consumes cross-fitted nuisances.
    fn uses_crossfit(self) -> bool {
        self != Method::Rs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub dgp: DgpSpec,
    pub ns: Vec<usize>,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub targets: RiskTargets,
    pub grid: ThresholdGrid,
    pub folds: usize,
    pub delta: f64,
    pub g_spec: BinaryLearnerSpec,
    pub e_spec: BinaryLearnerSpec,
    pub rs_bound: BoundRule,
    pub oracle_m: usize,
    pub seed: u64,
}

impl StudyConfig {
    pub fn new(dgp: DgpSpec) -> Self {
        Self {
            dgp,
            ns: vec![1000],
            reps: 200,
            methods: Method::ALL.to_vec(),
            targets: RiskTargets::default(),
            grid: ThresholdGrid::default_grid(),
            folds: 2,
            delta: 0.01,
            g_spec: BinaryLearnerSpec::default(),
            e_spec: BinaryLearnerSpec::default(),
            rs_bound: BoundRule::MaxTimes(1.3),
            oracle_m: DEFAULT_ORACLE_M,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidConfig("at least one replication is required".into()));
        }
        if self.ns.is_empty() || self.ns.iter().any(|&n| n < 2 * self.folds.max(2)) {
            return Err(Error::InvalidConfig(
                "every sample size must allow the requested folds".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods requested".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig("at least two folds are required".into()));
        }
        if self.oracle_m == 0 {
            return Err(Error::InvalidConfig("oracle sample size must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "truncation delta {} outside (0, 0.5)",
                self.delta
            )));
        }
        self.g_spec.validate()?;
        self.e_spec.validate()
    }

    /// Stream index of replication `rep` at the `k`-th sample size.
    pub fn stream_index(k: usize, rep: usize) -> u64 {
        ((k as u64) << 32) | rep as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub n: usize,
    pub rep: usize,
    pub method: Method,
    /// Selected threshold; 0 for the sentinel.
    pub tau_hat: f64,
    pub sentinel: bool,
    /// Oracle coverage error of the selected set; absent on failure.
    pub psi_true: Option<f64>,
    /// `psi_true <= alpha_error`; false on failure.
    pub success: bool,
    pub failure: Option<String>,
    /// Numerical fallbacks inside the estimator.
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub n: usize,
    pub method: Method,
    pub reps: usize,
    pub successes: usize,
    pub failures: usize,
    pub proportion: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    /// Over non-failed replications; 0 when all failed.
    pub mean_tau_hat: f64,
    pub mean_psi_true: f64,
    pub sentinels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub m: usize,
    /// Optimal target threshold from sampled labels.
    pub tau0: f64,
    /// `(tau, Psi_tau)` over the grid, labels integrated analytically.
    pub psi_grid: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub config: StudyConfig,
    pub oracle: OracleSummary,
    pub rows: Vec<ReplicationRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl ReplicationReport {
    pub fn aggregate(&self, n: usize, method: Method) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.n == n && a.method == method)
    }
}

struct Oracle {
    sample: OracleSample,
    curve: OracleCurve,
}

fn row_from(n: usize, rep: usize, method: Method, out: Result<(f64, bool, f64, usize)>, alpha: f64) -> ReplicationRow {
    match out {
        Ok((tau_hat, sentinel, psi, fallbacks)) => ReplicationRow {
            n,
            rep,
            method,
            tau_hat,
            sentinel,
            psi_true: Some(psi),
            success: psi <= alpha,
            failure: None,
            fallbacks,
        },
        Err(e) => {
            debug!("replication {rep} at n={n}, {}: {e}", method.name());
            ReplicationRow {
                n,
                rep,
                method,
                tau_hat: 0.0,
                sentinel: false,
                psi_true: None,
                success: false,
                failure: Some(e.kind().to_string()),
                fallbacks: 0,
            }
        }
    }
}

fn from_table(table: Result<CoverageTable>, cfg: &StudyConfig, oracle: &Oracle) -> Result<(f64, bool, f64, usize)> {
    let table = table?;
    let d = select_threshold(&table, &cfg.targets);
    let tau = d.tau_hat();
    Ok((tau, d.selected.is_sentinel(), oracle.curve.psi(tau), table.flags.len()))
}

/// Calibration data for the conformal baselines: the source units of fold 1.
fn calibration(sample: &ObservedSample, folds: &FoldPlan) -> Result<(Vec<usize>, f64)> {
    let idx = folds.indices(1);
    let cal: Vec<usize> = idx.iter().copied().filter(|&i| sample.unit(i).is_source()).collect();
    if cal.is_empty() || cal.len() == idx.len() {
        return Err(Error::DegenerateFold {
            fold: 1,
            n_source: cal.len(),
            n_target: idx.len() - cal.len(),
        });
    }
    Ok((cal.clone(), cal.len() as f64 / idx.len() as f64))
}

fn run_replication(cfg: &StudyConfig, oracle: &Oracle, k: usize, n: usize, rep: usize) -> Vec<ReplicationRow> {
    let base = RngStream::new(cfg.seed, Purpose::DgpDraw, StudyConfig::stream_index(k, rep));
    let alpha = cfg.targets.alpha_error();
    let sample = match cfg.dgp.draw(n, &base) {
        Ok(s) => s,
        Err(e) => {
            return cfg
                .methods
                .iter()
                .map(|&m| row_from(n, rep, m, Err(e.clone()), alpha))
                .collect()
        }
    };

    let crossfit: Option<Result<(FoldPlan, NuisanceFits)>> = cfg.methods.iter().any(|m| m.uses_crossfit()).then(|| {
        let folds = make_folds(n, cfg.folds, &base.with_purpose(Purpose::Folds))?;
        let fits = fit_nuisances(&sample, &folds, &cfg.grid, &cfg.g_spec, &cfg.e_spec, cfg.delta, &base)?;
        Ok((folds, fits))
    });

    cfg.methods
        .iter()
        .map(|&method| {
            let out = if method == Method::Rs {
                let rs_cfg = RsConfig {
                    train_fraction: 0.5,
                    bound: cfg.rs_bound,
                    delta: cfg.delta,
                    g_spec: cfg.g_spec.clone(),
                    e_spec: cfg.e_spec.clone(),
                };
                let table = rs_prepare(&sample, &rs_cfg, &cfg.grid, &base)
                    .and_then(|run| rs_estimate(&run, &sample, &cfg.targets));
                from_table(table, cfg, oracle)
            } else {
                match crossfit.as_ref().expect("cross-fit requested") {
                    Err(e) => Err(e.clone()),
                    Ok((folds, fits)) => run_crossfit_method(method, cfg, oracle, &sample, folds, fits),
                }
            };
            row_from(n, rep, method, out, alpha)
        })
        .collect()
}

fn run_crossfit_method(
    method: Method,
    cfg: &StudyConfig,
    oracle: &Oracle,
    sample: &ObservedSample,
    folds: &FoldPlan,
    fits: &NuisanceFits,
) -> Result<(f64, bool, f64, usize)> {
    let (g, t) = (&cfg.grid, &cfg.targets);
    match method {
        Method::OneStep => from_table(onestep_estimate(sample, folds, g, fits, t), cfg, oracle),
        Method::Tmle => from_table(tmle_estimate(sample, folds, g, fits, t), cfg, oracle),
        Method::Plugin => from_table(plugin_estimate(sample, folds, g, fits, t), cfg, oracle),
        Method::WeightedPlugin => from_table(weighted_plugin_estimate(sample, folds, g, fits, t), cfg, oracle),
        Method::InductiveCp => {
            let (cal, _) = calibration(sample, folds)?;
            let scores = cal.iter().map(|&i| sample.unit(i).score().expect("source")).collect();
            match inductive_cp_threshold(&CalibrationSet::new(scores)?, t) {
                Some(tau) => Ok((tau, false, oracle.curve.psi(tau), 0)),
                None => Ok((0.0, true, 0.0, 0)),
            }
        }
        Method::WeightedCp => {
            let (cal, gamma) = calibration(sample, folds)?;
            let weight = |x: &[f64]| odds_weight_unchecked(fits.propensity(1, x), gamma);
            let scores: Vec<f64> = cal.iter().map(|&i| sample.unit(i).score().expect("source")).collect();
            let weights: Vec<f64> = cal.iter().map(|&i| weight(sample.unit(i).x())).collect();
            let wc = WeightedCalibration::new(&scores, &weights)?;
            let alpha = t.alpha_error();
            // fail early on degenerate weights
            let reference = wc.cutoff(1.0, alpha)?;
            let psi = oracle
                .sample
                .coverage_error_with(|x| wc.cutoff(weight(x), alpha).unwrap_or(f64::NEG_INFINITY));
            let sentinel = reference == f64::NEG_INFINITY;
            Ok((if sentinel { 0.0 } else { reference }, sentinel, psi, 0))
        }
        Method::Rs => unreachable!("handled by the caller"),
    }
}

fn aggregate(cfg: &StudyConfig, rows: &[ReplicationRow]) -> Result<Vec<AggregateRow>> {
    let mut out = Vec::new();
    for &n in &cfg.ns {
        for &method in &cfg.methods {
            let sel: Vec<&ReplicationRow> = rows.iter().filter(|r| r.n == n && r.method == method).collect();
            let reps = sel.len();
            let successes = sel.iter().filter(|r| r.success).count();
            let ok: Vec<&&ReplicationRow> = sel.iter().filter(|r| r.failure.is_none()).collect();
            let failures = reps - ok.len();
            let (lo, hi) = wilson_interval(successes as u64, reps as u64, 0.95)?;
            let mean = |f: &dyn Fn(&ReplicationRow) -> f64| {
                if ok.is_empty() {
                    0.0
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
                }
            };
            if failures > 0 {
                warn!(
                    "{failures} of {reps} replications failed for {} at n={n}",
                    method.name()
                );
            }
            out.push(AggregateRow {
                n,
                method,
                reps,
                successes,
                failures,
                proportion: successes as f64 / reps as f64,
                wilson_lo: lo,
                wilson_hi: hi,
                mean_tau_hat: mean(&|r| r.tau_hat),
                mean_psi_true: mean(&|r| r.psi_true.unwrap_or(0.0)),
                sentinels: sel.iter().filter(|r| r.sentinel).count(),
            });
        }
    }
    Ok(out)
}

/// Runs every replication at every sample size. Replications run in
/// parallel on independent streams; rows are ordered by sample size,
/// replication and method.
pub fn run_study(cfg: &StudyConfig) -> Result<ReplicationReport> {
    cfg.validate()?;
    let sample = OracleSample::draw(
        &cfg.dgp,
        Population::Target,
        cfg.oracle_m,
        &RngStream::new(cfg.seed, Purpose::Oracle, 0),
    )?;
    let curve = sample.curve();
    let tau0 = oracle_tau0(
        &cfg.dgp,
        cfg.targets.alpha_error(),
        cfg.oracle_m,
        &RngStream::new(cfg.seed, Purpose::Oracle, 1),
        Population::Target,
    )?;
    let oracle = Oracle { sample, curve };
    let summary = OracleSummary {
        m: cfg.oracle_m,
        tau0,
        psi_grid: cfg.grid.taus().iter().map(|&t| (t, oracle.curve.psi(t))).collect(),
    };

    let mut rows = Vec::new();
    for (k, &n) in cfg.ns.iter().enumerate() {
        let per: Vec<Vec<ReplicationRow>> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| run_replication(cfg, &oracle, k, n, rep))
            .collect();
        rows.extend(per.into_iter().flatten());
    }
    let aggregates = aggregate(cfg, &rows)?;
    Ok(ReplicationReport {
        config: cfg.clone(),
        oracle: summary,
        rows,
        aggregates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simbench::dgp::DgpKind;

    fn small(methods: Vec<Method>, reps: usize) -> StudyConfig {
        StudyConfig {
            ns: vec![300],
            reps,
            methods,
            oracle_m: 2000,
            seed: 11,
            ..StudyConfig::new(DgpSpec::new(DgpKind::LowDim))
        }
    }

    #[test]
    fn deterministic_and_shaped() {
        let cfg = small(Method::ALL.to_vec(), 2);
        let a = run_study(&cfg).unwrap();
        let b = run_study(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 14);
        assert_eq!(a.aggregates.len(), 7);
        for agg in &a.aggregates {
            assert!(agg.wilson_lo <= agg.proportion && agg.proportion <= agg.wilson_hi);
        }
    }

    #[test]
    fn one_method_one_row_per_rep() {
        let r = run_study(&small(vec![Method::OneStep], 3)).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert!(r.rows.iter().all(|row| row.method == Method::OneStep));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()).unwrap(), m);
        }
        assert!(Method::parse("bogus").is_err());
    }
}
