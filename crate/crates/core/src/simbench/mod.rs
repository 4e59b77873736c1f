//! Simulation data-generating processes, oracle ground truth and the
//! replication harness.

pub mod dgp;
pub mod oracle;
pub mod study;

pub use dgp::{dgp_draw, DgpKind, DgpSpec, OracleFunction, OracleTarget, Population};
pub use oracle::{oracle_psi, oracle_tau0, OracleCurve, OracleSample, DEFAULT_ORACLE_M};
pub use study::{run_study, AggregateRow, Method, OracleSummary, ReplicationReport, ReplicationRow, StudyConfig};
