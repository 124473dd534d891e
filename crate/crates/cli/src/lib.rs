//! Experiment runner behind the `beamsolve` binary.
//!
//! A JSON config names a scenario, a seed, a channel count and one of the
//! three solvers. [`run_experiment`] solves every seeded channel realization
//! on a thread pool and [`write_outputs`] emits the per-step trace CSV and a
//! JSON summary. [`compare_engines`] lines up the mean WSR curves of several
//! configs that share their channels.

pub mod compare;
pub mod config;
pub mod error;
pub mod experiment;

pub use compare::{compare_engines, ComparisonTable};
pub use config::{load_config, parse_config, Engine, EngineParams, ExperimentConfig, OutputConfig, StepPolicy, SEED_ENV};
pub use error::CliError;
pub use experiment::{check_outputs, run_experiment, write_outputs, write_trace_csv, Experiment, RunOptions, Summary, CSV_HEADER};
