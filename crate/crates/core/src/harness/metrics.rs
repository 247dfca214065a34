//! Tracking and heart-rate scores of a run.

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::runner::StepRecord;
use crate::{Error, Result};

/// Scores of one trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean `|x* - x_gt|` in radians.
    pub tracking_mae_rad: f64,
    /// Fraction of steps with an estimate within tolerance; a missing
    /// estimate counts as a miss.
    pub hr_accuracy: f64,
    /// Fraction of steps with any estimate.
    pub hr_availability: f64,
    pub mean_step_latency_s: f64,
    pub max_step_latency_s: f64,
}

pub fn compute_metrics(trace: &[StepRecord], hr_truth_bpm: f64, tolerance_bpm: f64) -> Result<Metrics> {
    if trace.is_empty() {
        return Err(Error::invalid("cannot score an empty trace"));
    }
    let n = trace.len() as f64;
    let mae = trace.iter().map(|r| (r.x_star - r.x_gt).abs()).sum::<f64>() / n;
    let hits = trace
        .iter()
        .filter(|r| r.hr_bpm.is_some_and(|b| (b - hr_truth_bpm).abs() <= tolerance_bpm))
        .count();
    let available = trace.iter().filter(|r| r.hr_bpm.is_some()).count();
    Ok(Metrics {
        tracking_mae_rad: mae,
        hr_accuracy: hits as f64 / n,
        hr_availability: available as f64 / n,
        mean_step_latency_s: trace.iter().map(|r| r.wall_time_s).sum::<f64>() / n,
        max_step_latency_s: trace.iter().map(|r| r.wall_time_s).fold(0.0, f64::max),
    })
}

/// Run summary written next to the trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub tracking_mae_rad: f64,
    pub hr_accuracy_5bpm: f64,
    pub hr_availability: f64,
    pub mean_step_latency_s: f64,
    pub max_step_latency_s: f64,
    pub hr_tolerance_bpm: f64,
    pub hr_truth_bpm: f64,
    pub steps: usize,
    pub reinitialized_steps: usize,
    pub policy: String,
    pub seed: u64,
    pub config_digest: String,
    pub config: ScenarioConfig,
}

pub fn summarize(trace: &[StepRecord], config: &ScenarioConfig) -> Result<ScenarioSummary> {
    let truth = config.environment.target.hr_bpm;
    let tol = config.run.hr_tolerance_bpm;
    let m = compute_metrics(trace, truth, tol)?;
    Ok(ScenarioSummary {
        tracking_mae_rad: m.tracking_mae_rad,
        hr_accuracy_5bpm: m.hr_accuracy,
        hr_availability: m.hr_availability,
        mean_step_latency_s: m.mean_step_latency_s,
        max_step_latency_s: m.max_step_latency_s,
        hr_tolerance_bpm: tol,
        hr_truth_bpm: truth,
        steps: trace.len(),
        reinitialized_steps: trace.iter().filter(|r| r.reinitialized).count(),
        policy: config.policy.label(),
        seed: config.run.seed,
        config_digest: config.digest()?,
        config: config.clone(),
    })
}
