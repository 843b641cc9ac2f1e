//! Metrics, estimator pipelines and simulation experiments.

mod experiment;
mod metrics;
mod pipelines;
mod report;

pub use experiment::{
    mme_count, run_experiment, simulate_trial, ExperimentConfig, ExperimentReport, Instance, LambdaPolicy, MetricsRow, NoiseModel, Setting,
    SimulationTrace, StageCounts, StageSummary, SweepVar, TracePoint, TrialRecord,
};
pub use metrics::{rrmse, sens_spec};
pub use pipelines::{
    declared_support, effective_sigma, pipeline_cape, pipeline_mmer, pipeline_odrlt, pipeline_rl, run_pipeline, Aux,
    Estimator, PipelineConfig, PipelineOutput, NOISELESS_SIGMA_FRACTION,
};
pub use report::{aggregate_csv, plot_data, stage_table_csv, trace_csv, trials_csv, AGGREGATE_HEADER, TRIAL_HEADER};
