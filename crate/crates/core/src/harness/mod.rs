//! Scenario definitions, seed sweeps, metrics and CSV output.

mod config;
mod metrics;
mod output;
mod run;

pub use config::{
    AgentConfig, Estimator, EstimatorSettings, ModelConfig, ScenarioConfig, ScenarioKind,
    TopologyChoice, DEFAULT_HORIZON, DEFAULT_P0, DEFAULT_RADIUS, DYNAMIC_P0,
};
pub use metrics::{
    average_summaries, compute_metrics, AgentMetrics, ErrorStats, RunMetrics, SummaryMetrics,
};
pub use output::{
    aggregate_csv, trace_csv, trace_file_name, write_outputs, AGGREGATE_HEADER, TRACE_HEADER,
};
pub use run::{run_scenario, run_seed, sweep_radius, ScenarioResult, SeedRun, StepRecord};
