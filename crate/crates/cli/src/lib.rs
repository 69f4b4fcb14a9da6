//! Experiment runner: TOML experiment configs, result tables, sweeps.
//!
//! A run writes four files into its output directory:
//!
//! * `results.csv`: one row per (scheduler, seed) cell;
//! * `runtime.csv`: scheduler wall-clock per cell, kept apart because it is
//!   the only nondeterministic output;
//! * `steps.csv`: one row per scheduling step;
//! * `summary.json`: cell statuses, per-scheduler means, config hash and
//!   version.

pub mod config;
mod describe;
pub mod experiment;
pub mod sweep;

pub use config::{BlockSpec, ConfigError, ExperimentConfig, Mode, SimulationSpec, WorkloadSpec};
pub use describe::describe_result;
pub use experiment::{
    build_workload, run_cells, run_experiment, run_experiment_in, simulate, write_atomic, Cell, CellStatus, ResultRow,
    RunOutput, RunSummary, Workload,
};
pub use sweep::{apply as apply_sweep_value, sweep_in, SweepOutput, SweepParam};
