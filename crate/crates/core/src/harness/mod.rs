//! Experiment orchestration: configs, training runs, evaluation, traces
//! and comparisons.

pub mod compare;
pub mod config;
pub mod run;

pub use compare::{compare, load_run, Comparison};
pub use config::{Method, Preset, RunConfig, Task, TaskConfig, PRESETS};
pub use run::{
    evaluate, evaluate_run, run_episode, train_run, Controller, EvalReport, RunManifest, TraceStep, TrialRecord,
};
