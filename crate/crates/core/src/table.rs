//! Per-threshold estimate tables and threshold decisions.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub tau: f64,
    pub psi_hat: f64,
    pub sigma_hat: f64,
    /// `sigma_hat / sqrt(n)`.
    pub se: f64,
    pub cub: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDiagnostics {
    pub fold: usize,
    pub size: usize,
    pub n_source: usize,
    pub n_target: usize,
    pub gamma: f64,
    /// Fold estimate per threshold.
    pub psi: Vec<f64>,
    /// Fold plug-in (mean fitted error over target units) per threshold.
    pub plugin: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub method: String,
    pub n: usize,
    pub z: f64,
    pub rows: Vec<CoverageRow>,
    pub folds: Vec<FoldDiagnostics>,
    /// Free-form warnings such as targeting fallbacks.
    pub flags: Vec<String>,
}

impl CoverageTable {
    pub(crate) fn row(tau: f64, psi_hat: f64, sigma_hat: f64, n: usize, z: f64) -> CoverageRow {
        let se = sigma_hat / (n as f64).sqrt();
        CoverageRow {
            tau,
            psi_hat,
            sigma_hat,
            se,
            cub: psi_hat + z * se,
        }
    }

    pub fn taus(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.tau).collect()
    }

    pub fn cubs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.cub).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SelectedThreshold {
    /// A grid point; `index` is its position in the grid.
    Grid { index: usize, tau: f64 },
    /// No grid point qualifies: the most conservative set.
    Sentinel,
    /// A threshold not on the grid (conformal baselines).
    Free { tau: f64 },
}

impl SelectedThreshold {
    /// The threshold as a number; the sentinel maps to 0.
    pub fn value(&self) -> f64 {
        match *self {
            SelectedThreshold::Grid { tau, .. } | SelectedThreshold::Free { tau } => tau,
            SelectedThreshold::Sentinel => 0.0,
        }
    }

    pub fn is_sentinel(&self) -> bool {
        matches!(self, SelectedThreshold::Sentinel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDecision {
    pub selected: SelectedThreshold,
    pub method: String,
    pub table: CoverageTable,
}

impl ThresholdDecision {
    pub fn tau_hat(&self) -> f64 {
        self.selected.value()
    }
}
