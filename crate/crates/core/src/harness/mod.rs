//! Experiment orchestration: seeded per-run pipelines, multi-seed sweeps,
//! condition tables and parameter series.

mod config;
mod report;
mod run;

pub use config::{
    Condition, ConditionsFile, ConventionalDa, DataSource, ExperimentConfig, ModelSource,
    SearchSettings, VerbalizerMode, DEFAULT_SEEDS,
};
pub use report::{
    cell, mean_std, seeds_csv, ConditionTable, ParameterSeries, RunReport, SeedRecord, Summary,
    SweepParam,
};
pub use run::{
    prepare, run_conditions, run_conditions_cached, run_seed, run_single, run_sweep,
    run_sweep_prepared, sweep_parameter, Prepared, PreparedCache,
};
