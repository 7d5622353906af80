//! Experiment driver for the STORM trust-region method: runs replicated
//! solves over a tolerance grid, writes CSV artifacts and checks the
//! measured stopping times against the complexity bound.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod harness;
pub mod plan;
pub mod renewal_check;

use thiserror::Error;

pub use harness::{
    render_report, run_plan, summarize, validate_bound, validate_dir, BoundReport, BoundRow, PlanOutput,
    RunRow, SummaryStats, TraceRow, Validation,
};
pub use plan::{ExperimentPlan, ProblemName, RuleName};
pub use renewal_check::{renewal_validation, RenewalReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("bound undefined: {0}")]
    Domain(String),
    #[error("run failed at eps = {epsilon}, rep = {rep}: {source}")]
    Run {
        epsilon: f64,
        rep: usize,
        #[source]
        source: storm_core::StormError,
    },
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for I/O and
    /// everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Domain(_) => 2,
            _ => 3,
        }
    }
}
