//! Prediction sets with asymptotic PAC coverage under unknown covariate shift.
//!
//! The crate estimates, for each candidate threshold `tau`, the coverage
//! error of the nested prediction set `C_tau(x) = { y : s(x, y) >= tau }` in
//! an unlabeled target population, using labeled source data and covariates
//! from both populations. A Wald confidence upper bound (CUB) on that error
//! drives the threshold choice.
//!
//! Estimators:
//!
//! - [`onestep`]: cross-fit one-step corrected estimator, plus the plug-in and
//!   weighted plug-in baselines sharing its pipeline.
//! - [`tmle`]: cross-validated targeted estimator that stays inside `[0, 1]`.
//! - [`rejsamp`]: rejection sampling against the estimated likelihood ratio
//!   followed by a one-step corrected proportion.
//! - [`conformal`]: inductive and weighted split conformal baselines.
//!
//! Nuisance functions (propensity score and conditional coverage error) are
//! fit out-of-fold by the in-repo [`learners`] in [`crossfit`]. The
//! [`simbench`] module holds the simulation data-generating processes,
//! oracle quantities and the replication harness.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conformal;
pub mod crossfit;
pub mod error;
pub mod folds;
pub mod learners;
pub mod onestep;
pub mod rejsamp;
pub mod rng;
pub mod sample;
pub mod simbench;
pub mod stats;
pub mod table;
pub mod tmle;

pub use crate::crossfit::{fit_nuisances, odds_weight, oracle_nuisances, NuisanceFits};
pub use crate::error::{Error, Result};
pub use crate::folds::{make_folds, FoldPlan};
pub use crate::learners::{fit_binary, BinaryLearnerSpec, FittedPredictor, LearnerKind};
pub use crate::onestep::{onestep_estimate, plugin_estimate, select_threshold, weighted_plugin_estimate};
pub use crate::rejsamp::{rs_estimate, rs_prepare, BoundRule, RsConfig, RsRun};
pub use crate::rng::{Purpose, RngStream};
pub use crate::sample::{
    empirical_gamma, miscoverage_indicator, ObservedSample, ObservedUnit, RiskTargets, ThresholdGrid,
};
pub use crate::simbench::{DgpKind, DgpSpec, Method, ReplicationReport, StudyConfig};
pub use crate::table::{CoverageRow, CoverageTable, FoldDiagnostics, SelectedThreshold, ThresholdDecision};
pub use crate::tmle::tmle_estimate;
