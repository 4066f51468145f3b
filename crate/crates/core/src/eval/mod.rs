//! Error metrics, Monte Carlo experiments and timing benchmarks.

mod bench;
mod experiment;
mod metrics;

pub use bench::{benchmark_complexity, BenchConfig, BenchPoint, BenchRow};
pub use experiment::{
    derive_seed, run_experiment, ExperimentConfig, ExperimentReport, MethodRun, MethodSpec, MethodSummary, OnError,
    RunResult, ScenarioSpec,
};
pub use metrics::{
    agent_errors, agent_truth, cf_at, cumulative_frequency, rms, rmse_orientation, rmse_position, write_cf_csv,
    write_estimates_csv, AgentError,
};
