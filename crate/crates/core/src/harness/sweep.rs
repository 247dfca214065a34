//! SNR by policy grid of seeded repeats.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Policy, ScenarioConfig};
use super::runner::run_with_policy;
use crate::{Error, Result};

/// Outcome of one seeded run in the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub snr_db: f64,
    pub policy: String,
    pub seed: u64,
    pub tracking_mae_rad: Option<f64>,
    pub hr_accuracy: Option<f64>,
    pub hr_availability: Option<f64>,
    pub mean_step_latency_s: Option<f64>,
    pub error: Option<String>,
}

/// Aggregate over the repeats of one (SNR, policy) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub policy: String,
    pub repeats: usize,
    pub failed: usize,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub hr_accuracy_mean: f64,
    pub hr_accuracy_std: f64,
    pub hr_availability_mean: f64,
    pub latency_mean_s: f64,
    pub errors: String,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub runs: Vec<SweepRun>,
}

/// Runs every (SNR, policy, repeat) cell; repeat `i` uses seed `base + i`.
/// A failed run is recorded and the sweep goes on.
pub fn snr_sweep(base: &ScenarioConfig, snrs: &[f64], policies: &[Policy], repeats: usize) -> Result<SweepResult> {
    if snrs.is_empty() || policies.is_empty() || repeats == 0 {
        return Err(Error::config("sweep needs at least one SNR, one policy and one repeat"));
    }
    for p in policies {
        let mut c = base.clone();
        c.policy = p.clone();
        c.validate()?;
    }
    if snrs.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
        return Err(Error::config("SNR values must be numbers"));
    }

    let cells: Vec<(f64, &Policy, u64)> = snrs
        .iter()
        .flat_map(|&snr| {
            policies.iter().flat_map(move |p| {
                (0..repeats as u64).map(move |i| (snr, p, base.run.seed.wrapping_add(i)))
            })
        })
        .collect();

    let run_cell = |&(snr, policy, seed): &(f64, &Policy, u64)| -> SweepRun {
        let mut cfg = base.clone();
        cfg.environment.noise.snr_db = Some(snr);
        cfg.run.seed = seed;
        cfg.run.outputs = Default::default();
        let label = policy.label();
        match run_with_policy(&cfg, policy) {
            Ok(run) => SweepRun {
                snr_db: snr,
                policy: label,
                seed,
                tracking_mae_rad: Some(run.summary.tracking_mae_rad),
                hr_accuracy: Some(run.summary.hr_accuracy_5bpm),
                hr_availability: Some(run.summary.hr_availability),
                mean_step_latency_s: Some(run.summary.mean_step_latency_s),
                error: None,
            },
            Err(e) => SweepRun {
                snr_db: snr,
                policy: label,
                seed,
                tracking_mae_rad: None,
                hr_accuracy: None,
                hr_availability: None,
                mean_step_latency_s: None,
                error: Some(e.to_string()),
            },
        }
    };
    let runs: Vec<SweepRun> = if base.run.parallel {
        cells.par_iter().map(run_cell).collect()
    } else {
        cells.iter().map(run_cell).collect()
    };

    let rows = runs
        .chunks(repeats)
        .map(|cell| {
            let ok: Vec<&SweepRun> = cell.iter().filter(|r| r.error.is_none()).collect();
            let pick = |f: fn(&SweepRun) -> Option<f64>| ok.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
            let (mae_mean, mae_std) = mean_std(&pick(|r| r.tracking_mae_rad));
            let (acc_mean, acc_std) = mean_std(&pick(|r| r.hr_accuracy));
            SweepRow {
                snr_db: cell[0].snr_db,
                policy: cell[0].policy.clone(),
                repeats: cell.len(),
                failed: cell.len() - ok.len(),
                mae_mean,
                mae_std,
                hr_accuracy_mean: acc_mean,
                hr_accuracy_std: acc_std,
                hr_availability_mean: mean_std(&pick(|r| r.hr_availability)).0,
                latency_mean_s: mean_std(&pick(|r| r.mean_step_latency_s)).0,
                errors: cell
                    .iter()
                    .filter_map(|r| r.error.as_ref().map(|e| format!("seed {}: {e}", r.seed)))
                    .collect::<Vec<_>>()
                    .join("; "),
            }
        })
        .collect();
    Ok(SweepResult { rows, runs })
}

/// Mean and sample standard deviation; NaN mean for an empty cell.
fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
