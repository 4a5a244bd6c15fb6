//! End-to-end pipelines, the studies built on them, and run artifacts.
//!
//! A run directory holds `config.json` (the configuration as executed,
//! seed included), `result.json`, a `traces/` directory of CSV files and,
//! for optimization runs, `trials.jsonl` plus `top10.csv`. Criss-cross and
//! filter-sweep runs add `crisscross.csv` and `filter_sweep.csv`.

mod config;
mod pipeline;
mod run;

pub use config::{
    ChannelSpec, CrisscrossSpec, EngineKind, ExperimentConfig, FilterSweepSpec, Mode, NamedChannel,
    OptimizeSpec, StochasticCompareSpec, TaskSpec, SCHEMA_VERSION,
};
pub use pipeline::{
    deterministic_nrmse, effective_reservoir, evaluate_pipeline, evaluate_trace, predictions_csv,
    simulate_trace, Engine, PipelineOutput, Prediction,
};
pub use run::{
    crisscross, filter_sweep, run, sweep_csv, top_trials_csv, BestTrial, CrisscrossMatrix,
    ExperimentResult, SweepRow, TrialRecord,
};
