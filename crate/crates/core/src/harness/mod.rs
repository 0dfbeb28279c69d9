//! Experiment plumbing: synthetic data, configuration, scripted experiments
//! and the command line.

pub mod cli;
mod config;
mod repro;
mod run;
mod task;

pub use config::{DataConfig, DerivationConfig, ExperimentConfig};
pub use repro::*;
pub use run::{
    derive, final_dominance, run_seed, space_of, write_run, AlphaFile, AlphaMatrix, Derived, RunReport, RunResult,
    Runner, DEPARTURE_HALF_WIDTH, DEPARTURE_SHARE, POLAR_EDGE,
};
pub use task::{make_residual_task, SyntheticTask, Teacher, CLASSES};
