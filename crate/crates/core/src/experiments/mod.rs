//! Monte Carlo harness: censored survival curves, tail-exponent fits,
//! distributional tests, configs, suites and JSON reports.

pub mod config;
pub mod fit;
pub mod report;
pub mod stats;
pub mod suites;
pub mod survival;

pub use config::{ExperimentConfig, RootColoring};
pub use fit::{fit_tail_exponent, hill_estimate, FitMethod, TailFit};
pub use report::{Criterion, DataTable, Report, Tolerance};
pub use stats::{bonferroni, chi_square_gof, chi_square_independence, ks_two_sample, TestResult};
pub use suites::{run_suite, SuiteId, SuiteOutput};
pub use survival::{estimate_survival, GridSpec, SurvivalCurve};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("grid point {point} is not below the censoring bound {bound}")]
    GridAboveCap { point: u64, bound: u64 },
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("insufficient tail mass: {0}")]
    InsufficientTail(String),
    #[error("survival curve does not decay over the fit range")]
    NoDecay,
    #[error("table is under-pooled: expected count {expected:.3} < 5 in cell ({row}, {col})")]
    UnderPooled { row: usize, col: usize, expected: f64 },
    #[error("invalid test input: {0}")]
    BadInput(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("worker panicked on replicate {replicate}: {msg}")]
    WorkerPanic { replicate: u64, msg: String },
    #[error(transparent)]
    Peeling(#[from] crate::peeling::PeelingError),
}
