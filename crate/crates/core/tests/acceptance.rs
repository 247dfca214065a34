//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 5 6`.

use std::time::Instant;

use beamsteer_core::doppler::{estimate_hr, HrSettings};
use beamsteer_core::environment::{measure_snr, Environment, TrajectoryConfig};
use beamsteer_core::harness::{
    filter_oracle_suite, planner_oracle_suite, run_with_policy, write_trace, Policy, ScenarioConfig, ScenarioSummary,
};
use beamsteer_core::model::AngleGrid;
use num_complex::Complex64;

// Pinned tolerances.
const TRACK_MAE_MAX: f64 = 0.05;
const TRACK_RUNTIME_MAX_S: f64 = 120.0;
const HR_ACC_MIN: f64 = 0.80;
const LOW_SNR_MAE_MAX: f64 = 0.1;
const LOW_SNR_HR_MIN: f64 = 0.7;
const FIXED_MAE_RATIO_MIN: f64 = 3.0;
const FIXED_HR_GAP_MIN: f64 = 0.3;
const ORACLE_MEAN_TOL: f64 = 0.02;
const HR_NOISELESS_TOL_BPM: f64 = 2.0;
const SNR_TOL_DB: f64 = 0.5;
const LATENCY_MAX_S: f64 = 1.0;
const SEEDS: u64 = 5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn base(snr_db: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.environment.noise.snr_db = Some(snr_db);
    cfg.run.steps = 60;
    cfg
}

fn runs(snr_db: f64, policy: &Policy) -> Vec<(ScenarioSummary, f64)> {
    (0..SEEDS)
        .map(|seed| {
            let mut cfg = base(snr_db);
            cfg.run.seed = seed;
            let start = Instant::now();
            let run = run_with_policy(&cfg, policy).expect("scenario runs");
            (run.summary, start.elapsed().as_secs_f64())
        })
        .collect()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Default)]
struct Cache {
    adaptive_20: Option<Vec<(ScenarioSummary, f64)>>,
}

impl Cache {
    fn adaptive_20(&mut self) -> &[(ScenarioSummary, f64)] {
        self.adaptive_20.get_or_insert_with(|| runs(20.0, &Policy::Adaptive))
    }
}

fn tracking(cache: &mut Cache) -> Outcome {
    let (s, secs) = &cache.adaptive_20()[0];
    outcome(
        s.tracking_mae_rad <= TRACK_MAE_MAX && *secs <= TRACK_RUNTIME_MAX_S,
        format!(
            "adaptive, 20 dB, 60 steps, seed 0: MAE {:.4} rad (<= {TRACK_MAE_MAX}), runtime {secs:.1} s (<= {TRACK_RUNTIME_MAX_S})",
            s.tracking_mae_rad
        ),
    )
}

fn hr_accuracy(cache: &mut Cache) -> Outcome {
    let runs = cache.adaptive_20();
    let acc = mean(runs.iter().map(|r| r.0.hr_accuracy_5bpm));
    outcome(
        acc >= HR_ACC_MIN,
        format!("adaptive, 20 dB: mean 5-bpm HR accuracy {acc:.3} over {SEEDS} seeds (>= {HR_ACC_MIN})"),
    )
}

fn low_snr() -> Outcome {
    let runs = runs(0.0, &Policy::Adaptive);
    let mae = mean(runs.iter().map(|r| r.0.tracking_mae_rad));
    let acc = mean(runs.iter().map(|r| r.0.hr_accuracy_5bpm));
    outcome(
        mae <= LOW_SNR_MAE_MAX && acc >= LOW_SNR_HR_MIN,
        format!("adaptive, 0 dB: mean MAE {mae:.4} rad (<= {LOW_SNR_MAE_MAX}), HR accuracy {acc:.3} (>= {LOW_SNR_HR_MIN})"),
    )
}

fn fixed_beam_fails() -> Outcome {
    let adaptive = runs(10.0, &Policy::Adaptive);
    let fixed = runs(10.0, &Policy::Fixed { angle: 0.0 });
    let (am, aa) = (
        mean(adaptive.iter().map(|r| r.0.tracking_mae_rad)),
        mean(adaptive.iter().map(|r| r.0.hr_accuracy_5bpm)),
    );
    let (fm, fa) = (
        mean(fixed.iter().map(|r| r.0.tracking_mae_rad)),
        mean(fixed.iter().map(|r| r.0.hr_accuracy_5bpm)),
    );
    outcome(
        fm >= FIXED_MAE_RATIO_MIN * am && fa <= aa - FIXED_HR_GAP_MIN,
        format!(
            "10 dB: fixed(0) MAE {fm:.4} vs adaptive {am:.4} (ratio {:.1} >= {FIXED_MAE_RATIO_MIN}); HR accuracy fixed {fa:.3} vs adaptive {aa:.3} (gap >= {FIXED_HR_GAP_MIN})",
            fm / am
        ),
    )
}

fn filter_oracle() -> Outcome {
    let cases = filter_oracle_suite(&base(20.0), 3, 10, 10_000, 1e-3).expect("filter oracle suite");
    let worst = cases.iter().map(|c| c.max_abs_diff).fold(0.0, f64::max);
    outcome(
        worst <= ORACLE_MEAN_TOL,
        format!("10-step scripted scenario, N_p = 10^4, 3 seeds: max |PF - grid Bayes| {worst:.5} rad (<= {ORACLE_MEAN_TOL})"),
    )
}

fn planner_oracle() -> Outcome {
    let cases = planner_oracle_suite(0, 10, 100_000).expect("planner oracle suite");
    let agree = cases.iter().filter(|c| c.agrees()).count();
    let notes: Vec<String> = cases
        .iter()
        .filter(|c| !c.agrees())
        .map(|c| format!("trial {}: planner {}, oracle {}", c.trial, c.planner_action, c.oracle_action))
        .collect();
    outcome(
        agree == cases.len(),
        format!("toy problem (3 angles, 3 actions, 10^5 draws): {agree}/{} argmax agreements {}", cases.len(), notes.join(", ")),
    )
}

fn hr_noiseless() -> Outcome {
    let prf = 1500.0;
    let mut worst: f64 = 0.0;
    let mut missing = false;
    for bpm in [110.0, 120.0, 140.0, 160.0] {
        let f = bpm / 60.0;
        let s: Vec<Complex64> = (0..1500)
            .map(|n| {
                let w = 2.0 * std::f64::consts::PI * f * n as f64 / prf;
                Complex64::from_polar(1.0, w.sin() + 0.5 * (2.0 * w).sin())
            })
            .collect();
        match estimate_hr(&s, prf, &HrSettings::default()).unwrap().bpm {
            Some(est) => worst = worst.max((est - bpm).abs()),
            None => missing = true,
        }
    }
    outcome(
        !missing && worst <= HR_NOISELESS_TOL_BPM,
        format!("110/120/140/160 bpm, 1 s at 1500 Hz: max error {worst:.3} bpm (<= {HR_NOISELESS_TOL_BPM}){}", if missing { ", an estimate was missing" } else { "" }),
    )
}

fn snr_calibration() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for snr in [0.0, 10.0, 20.0] {
        let mut cfg = base(snr).environment;
        cfg.trajectory = TrajectoryConfig::stationary(0.0);
        let env = Environment::new(cfg, AngleGrid::default(), 17).unwrap();
        let measured = measure_snr(&env, 100).unwrap();
        worst = worst.max((measured - snr).abs());
        parts.push(format!("{snr} -> {measured:.3}"));
    }
    outcome(
        worst <= SNR_TOL_DB,
        format!("100 frames: {} dB; max deviation {worst:.3} dB (<= {SNR_TOL_DB})", parts.join(", ")),
    )
}

fn latency(cache: &mut Cache) -> Outcome {
    let runs = cache.adaptive_20();
    let lat = mean(runs.iter().map(|r| r.0.mean_step_latency_s));
    let worst = runs.iter().map(|r| r.0.max_step_latency_s).fold(0.0, f64::max);
    outcome(
        lat < LATENCY_MAX_S,
        format!("defaults: mean perceive+plan {lat:.3} s per step (< {LATENCY_MAX_S}), slowest step {worst:.3} s"),
    )
}

fn determinism() -> Outcome {
    let mut cfg = base(10.0);
    cfg.run.steps = 6;
    let mut traces = Vec::new();
    for parallel in [true, false, true] {
        cfg.run.parallel = parallel;
        let run = run_with_policy(&cfg, &Policy::Adaptive).expect("run");
        let mut buf = Vec::new();
        write_trace(&mut buf, &run.trace, 21, false).unwrap();
        traces.push(buf);
    }
    let same = traces.windows(2).all(|w| w[0] == w[1]);
    outcome(
        same,
        format!("6-step adaptive trace, parallel on/off/on: {} ({} bytes)", if same { "byte-identical" } else { "differs" }, traces[0].len()),
    )
}

type Criterion<'a> = (usize, &'a str, &'a dyn Fn(&mut Cache) -> Outcome);

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut cache = Cache::default();
    let criteria: [Criterion; 10] = [
        (1, "closed-loop tracking", &tracking),
        (2, "heart-rate accuracy", &hr_accuracy),
        (3, "adaptive at 0 dB", &|_| low_snr()),
        (4, "fixed beam fails at 10 dB", &|_| fixed_beam_fails()),
        (5, "filter vs grid Bayes oracle", &|_| filter_oracle()),
        (6, "planner vs Monte Carlo entropy oracle", &|_| planner_oracle()),
        (7, "noiseless heart-rate estimates", &|_| hr_noiseless()),
        (8, "SNR calibration", &|_| snr_calibration()),
        (9, "step latency", &latency),
        (10, "trace determinism", &|_| determinism()),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria.iter() {
        if !wanted.is_empty() && !wanted.contains(id) {
            continue;
        }
        let start = Instant::now();
        let o = run(&mut cache);
        if !o.pass {
            failed += 1;
        }
        println!(
            "[{}] criterion {id:>2} {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
