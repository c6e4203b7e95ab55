//! Configuration, experiment orchestration and CSV output.

mod config;
pub mod csv;
mod experiment;
mod random;

pub use config::{ExperimentConfig, ExperimentSection, MethodName, RandomSearchConfig, SweepConfig, SWEEP_PARAMETERS};
pub use experiment::{
    checkpoint_file_name, compare, execute, median, run_experiment, run_method, sweep, trace_file_name, write_outputs,
    ComparisonRow, ComparisonTable, ExperimentReport, SweepCell,
};
pub use random::random_search;
