//! Cross-fit one-step corrected estimator of the target coverage error, the
//! plug-in and weighted plug-in baselines, and prefix threshold selection.

use rayon::prelude::*;

use crate::crossfit::{odds_weight_unchecked, NuisanceFits};
use crate::error::{Error, Result};
use crate::folds::FoldPlan;
use crate::sample::{ObservedSample, ObservedUnit, RiskTargets, ThresholdGrid};
use crate::table::{CoverageTable, FoldDiagnostics, SelectedThreshold, ThresholdDecision};

/// Gradient of the target coverage error at one unit:
/// `(a/gamma) W (Z - E) + ((1-a)/(1-gamma)) (E - psi_plugin)`.
/// `g_hat` must already be truncated; `Z` is read only for source units.
pub fn gradient_eval(
    unit: &ObservedUnit,
    tau: f64,
    e_hat: f64,
    g_hat: f64,
    gamma_hat: f64,
    psi_plugin: f64,
) -> Result<f64> {
    if !(gamma_hat > 0.0 && gamma_hat < 1.0) {
        return Err(Error::Domain(format!("source fraction {gamma_hat} outside (0, 1)")));
    }
    Ok(match unit.miscovered(tau) {
        Some(z) => {
            let w = crate::crossfit::odds_weight(g_hat, gamma_hat)?;
            w / gamma_hat * (z as f64 - e_hat)
        }
        None => (e_hat - psi_plugin) / (1.0 - gamma_hat),
    })
}

/// In-fold quantities that do not depend on the threshold.
pub(crate) struct FoldView {
    pub idx: Vec<usize>,
    pub gamma: f64,
    pub n_source: usize,
    pub n_target: usize,
    /// Likelihood-ratio weight per in-fold unit.
    pub w: Vec<f64>,
}

pub(crate) fn fold_views(sample: &ObservedSample, folds: &FoldPlan, fits: &NuisanceFits) -> Result<Vec<FoldView>> {
    if folds.n() != sample.len() {
        return Err(Error::DimensionMismatch {
            expected: sample.len(),
            got: folds.n(),
        });
    }
    (0..folds.n_folds())
        .map(|v| {
            let idx = folds.indices(v).to_vec();
            let n_source = idx.iter().filter(|&&i| sample.unit(i).is_source()).count();
            let n_target = idx.len() - n_source;
            if n_source == 0 || n_target == 0 {
                return Err(Error::DegenerateFold {
                    fold: v,
                    n_source,
                    n_target,
                });
            }
            let gamma = n_source as f64 / idx.len() as f64;
            let w = idx
                .iter()
                .map(|&i| odds_weight_unchecked(fits.propensity(v, sample.unit(i).x()), gamma))
                .collect();
            Ok(FoldView {
                idx,
                gamma,
                n_source,
                n_target,
                w,
            })
        })
        .collect()
}

pub(crate) fn check_grid(grid: &ThresholdGrid, fits: &NuisanceFits) -> Result<()> {
    if grid.taus() != fits.taus() {
        return Err(Error::InvalidArgument(
            "threshold grid differs from the grid the nuisances were fit on".into(),
        ));
    }
    Ok(())
}

/// Output of one fold at one threshold.
pub(crate) struct FoldEstimate {
    pub psi: f64,
    pub plugin: f64,
    /// Mean squared gradient.
    pub sigma2: f64,
}

/// Pools fold estimates into a table: `|I_v|`-weighted means of the fold
/// estimates and of the fold variances.
pub(crate) fn assemble<F>(
    method: &str,
    sample: &ObservedSample,
    views: &[FoldView],
    taus: &[f64],
    targets: &RiskTargets,
    fold_eval: F,
) -> Result<CoverageTable>
where
    F: Fn(usize, usize, &FoldView) -> Result<FoldEstimate> + Sync,
{
    let n = sample.len();
    let z = targets.z();
    let per_tau: Vec<Vec<FoldEstimate>> = (0..taus.len())
        .into_par_iter()
        .map(|t| views.iter().enumerate().map(|(v, fv)| fold_eval(v, t, fv)).collect())
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(taus.len());
    for (t, ests) in per_tau.iter().enumerate() {
        let mut psi = 0.0;
        let mut s2 = 0.0;
        for (fv, e) in views.iter().zip(ests) {
            psi += fv.idx.len() as f64 * e.psi;
            s2 += fv.idx.len() as f64 * e.sigma2;
        }
        rows.push(CoverageTable::row(
            taus[t],
            psi / n as f64,
            (s2 / n as f64).sqrt(),
            n,
            z,
        ));
    }
    let folds = views
        .iter()
        .enumerate()
        .map(|(v, fv)| FoldDiagnostics {
            fold: v,
            size: fv.idx.len(),
            n_source: fv.n_source,
            n_target: fv.n_target,
            gamma: fv.gamma,
            psi: per_tau.iter().map(|e| e[v].psi).collect(),
            plugin: per_tau.iter().map(|e| e[v].plugin).collect(),
        })
        .collect();
    Ok(CoverageTable {
        method: method.to_string(),
        n,
        z,
        rows,
        folds,
        flags: Vec::new(),
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Variant {
    OneStep,
    Plugin,
    WeightedPlugin,
}

fn pipeline(
    variant: Variant,
    sample: &ObservedSample,
    folds: &FoldPlan,
    grid: &ThresholdGrid,
    fits: &NuisanceFits,
    targets: &RiskTargets,
) -> Result<CoverageTable> {
    check_grid(grid, fits)?;
    let views = fold_views(sample, folds, fits)?;
    let taus = grid.taus();
    let method = match variant {
        Variant::OneStep => "onestep",
        Variant::Plugin => "plugin",
        Variant::WeightedPlugin => "wplugin",
    };
    assemble(method, sample, &views, taus, targets, |v, t, fv| {
        let tau = taus[t];
        let gamma = fv.gamma;
        let e: Vec<f64> = fv
            .idx
            .iter()
            .map(|&i| fits.cond_error(v, t, sample.unit(i).x()))
            .collect();

        let mut plugin = 0.0;
        let mut corr = 0.0;
        let mut wsum = 0.0;
        for (k, &i) in fv.idx.iter().enumerate() {
            match sample.unit(i).miscovered(tau) {
                Some(zi) => {
                    let zi = zi as f64;
                    corr += fv.w[k] / gamma * (zi - e[k]);
                    wsum += fv.w[k] * zi;
                }
                None => plugin += e[k],
            }
        }
        let plugin = plugin / fv.n_target as f64;
        let centre = match variant {
            Variant::WeightedPlugin => wsum / fv.n_source as f64,
            _ => plugin,
        };
        let psi = match variant {
            Variant::OneStep => plugin + corr / fv.idx.len() as f64,
            Variant::Plugin => plugin,
            Variant::WeightedPlugin => centre,
        };
        let mut sq = 0.0;
        for (k, &i) in fv.idx.iter().enumerate() {
            let d = match sample.unit(i).miscovered(tau) {
                Some(zi) => fv.w[k] / gamma * (zi as f64 - e[k]),
                None => (e[k] - centre) / (1.0 - gamma),
            };
            sq += d * d;
        }
        Ok(FoldEstimate {
            psi,
            plugin,
            sigma2: sq / fv.idx.len() as f64,
        })
    })
}

/// Cross-fit one-step corrected estimates, standard errors and CUBs.
pub fn onestep_estimate(
    sample: &ObservedSample,
    folds: &FoldPlan,
    grid: &ThresholdGrid,
    fits: &NuisanceFits,
    targets: &RiskTargets,
) -> Result<CoverageTable> {
    pipeline(Variant::OneStep, sample, folds, grid, fits, targets)
}

/// As [`onestep_estimate`] without the correction term.
pub fn plugin_estimate(
    sample: &ObservedSample,
    folds: &FoldPlan,
    grid: &ThresholdGrid,
    fits: &NuisanceFits,
    targets: &RiskTargets,
) -> Result<CoverageTable> {
    pipeline(Variant::Plugin, sample, folds, grid, fits, targets)
}

/// Fold estimate is the weighted source mean of `Z_tau`; the gradient is
/// centred at that value instead of the plug-in.
pub fn weighted_plugin_estimate(
    sample: &ObservedSample,
    folds: &FoldPlan,
    grid: &ThresholdGrid,
    fits: &NuisanceFits,
    targets: &RiskTargets,
) -> Result<CoverageTable> {
    pipeline(Variant::WeightedPlugin, sample, folds, grid, fits, targets)
}

/// Largest grid threshold whose CUB, and every CUB before it, is below
/// `alpha_error`.
pub fn select_threshold(table: &CoverageTable, targets: &RiskTargets) -> ThresholdDecision {
    let feasible = table.rows.iter().take_while(|r| r.cub < targets.alpha_error()).count();
    let selected = match feasible {
        0 => SelectedThreshold::Sentinel,
        k => SelectedThreshold::Grid {
            index: k - 1,
            tau: table.rows[k - 1].tau,
        },
    };
    if let SelectedThreshold::Grid { index, .. } = selected {
        debug_assert!(table.rows[..=index].iter().all(|r| r.cub < targets.alpha_error()));
    }
    ThresholdDecision {
        selected,
        method: table.method.clone(),
        table: table.clone(),
    }
}

impl CoverageTable {
    /// Clips estimates into `[0, 1]` and recomputes the CUBs. Off by default.
    pub fn project_to_unit(&mut self) {
        for r in &mut self.rows {
            r.psi_hat = r.psi_hat.clamp(0.0, 1.0);
            r.cub = r.psi_hat + self.z * r.se;
        }
        self.flags.push("projected".into());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::CoverageRow;

    #[test]
    fn gradient_examples() {
        let tgt = ObservedUnit::target(vec![0.0]);
        assert_eq!(gradient_eval(&tgt, 0.3, 0.2, 0.5, 0.5, 0.2).unwrap(), 0.0);
        let src = ObservedUnit::source(vec![0.0], 0.1);
        assert_eq!(gradient_eval(&src, 0.3, 1.0, 0.5, 0.5, 0.0).unwrap(), 0.0);
        // W = (2/3)/(1/3) = 2; (1/0.5) * 2 * (1 - 0.5)
        let d = gradient_eval(&src, 0.3, 0.5, 1.0 / 3.0, 0.5, 0.0).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
        assert!(gradient_eval(&src, 0.3, 0.5, 0.5, 1.0, 0.0).is_err());
    }

    fn table(cubs: &[f64]) -> CoverageTable {
        CoverageTable {
            method: "t".into(),
            n: 10,
            z: 1.0,
            rows: cubs
                .iter()
                .enumerate()
                .map(|(k, &c)| CoverageRow {
                    tau: 0.05 * (k + 1) as f64,
                    psi_hat: c,
                    sigma_hat: 0.0,
                    se: 0.0,
                    cub: c,
                })
                .collect(),
            folds: vec![],
            flags: vec![],
        }
    }

    #[test]
    fn prefix_rule() {
        let t = RiskTargets::default();
        let d = select_threshold(&table(&[0.01, 0.02, 0.03, 0.06, 0.04]), &t);
        assert!((d.tau_hat() - 0.15).abs() < 1e-12);
        assert_eq!(
            select_threshold(&table(&[0.05, 0.01]), &t).selected,
            SelectedThreshold::Sentinel
        );
        let all = select_threshold(&table(&[0.0, 0.01, 0.02, 0.03, 0.04]), &t);
        assert!((all.tau_hat() - 0.25).abs() < 1e-12);
    }
}
