//! Experiment harness: config files, run batches, CSV and SVG output.

mod config;
mod experiment;
pub mod svg;

pub use config::{parse_config, parse_config_str, parse_seeds, ExperimentSpec, DEFAULT_OUT_DIR};
pub use experiment::{
    mean_std, run_experiment, threads_from_env, trajectory_file_name, BatchReport, PointStats, RunStatus,
    SUMMARY_HEADER, THREADS_ENV,
};
