//! Scenario runner, policies, metrics, oracles and persistence.

mod config;
mod metrics;
pub mod oracle;
mod runner;
mod sweep;
pub mod trace;
mod validation;

pub use config::{AgentSection, ObservationScale, Outputs, Policy, RunSection, ScenarioConfig, UniformAngles};
pub use metrics::{compute_metrics, summarize, Metrics, ScenarioSummary};
pub use oracle::{entropy_oracle, grid_filter_oracle, EntropyOracle, GridOracle};
pub use runner::{
    filter_means, run_scenario, run_with_policy, scripted_observations, Observation, ScenarioRun, StepRecord,
};
pub use sweep::{snr_sweep, write_sweep, SweepResult, SweepRow, SweepRun};
pub use trace::{write_summary_file, write_trace, write_trace_file, TRACE_COLUMNS};
pub use validation::{
    filter_oracle_suite, planner_oracle_suite, toy_agent, FilterOracleCase, PlannerOracleCase,
};
