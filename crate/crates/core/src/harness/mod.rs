//! Experiment orchestration: data loading, partitioning, configuration,
//! run loops with metrics and bit accounting, and CSV output.

pub mod config;
pub mod data;
pub mod libsvm;
pub mod run;

pub use config::{ExperimentConfig, StepsizeMode};
pub use data::{partition, phishing_like, PartitionScheme};
pub use libsvm::{load_libsvm, parse_libsvm};
pub use run::{emit_csv, read_csv, run, run_problem, sweep, write_csv, Problem, Row, RunResult};
