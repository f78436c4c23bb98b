//! Experiment configs, seeded parallel runs, scenarios and CSV output.

pub mod config;
pub mod run;
pub mod scenarios;
pub mod sweep;

pub use config::{default_budget, ExperimentConfig, Setup};
pub use run::{
    area_under_curve, build_agent, read_eval_rows, run_experiment, run_seed, summarize, with_workers, write_rows,
    write_table, EvalRow, ExperimentReport, RunLog, RunStatus, SummaryRow, EVAL_COLUMNS, SUMMARY_COLUMNS, WORKERS_ENV,
};
pub use sweep::{run_grid, GridSpec, SweepRow};
