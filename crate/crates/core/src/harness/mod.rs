//! Benchmark assembly: named test problems, the method grid, and
//! table-shaped reports.

pub mod config;
pub mod experiment;
pub mod report;

pub use config::{ExperimentConfig, Method, NRule, TestId};
pub use experiment::{
    build_preconditioner, build_problem, make_initial_guess, run_cell, run_experiment, Experiment, Problem, RunRecord,
};
pub use report::{emit_report, parse_report, Status, TableRow};
