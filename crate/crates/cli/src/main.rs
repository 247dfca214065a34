//! `beamsteer`: run scenarios, sweeps, oracle checks and the heart-rate
//! chain from the command line.
//!
//! Exit codes: 0 success, 1 bad configuration or arguments, 2 runtime or
//! numerical failure (including failed oracle checks).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use beamsteer_core::doppler::estimate_hr;
use beamsteer_core::environment::{EnvConfig, Environment, RangeGridConfig, Transmit, TrajectoryConfig};
use beamsteer_core::harness::{
    filter_oracle_suite, planner_oracle_suite, run_with_policy, snr_sweep, write_summary_file, write_sweep,
    write_trace, write_trace_file, Policy, ScenarioConfig,
};
use beamsteer_core::model::AngleGrid;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "beamsteer", version, about = "Closed-loop Doppler beam steering simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; write the trace CSV and the summary JSON.
    Simulate(SimulateArgs),
    /// Run an SNR by policy grid of seeded repeats; write a CSV table.
    Sweep(SweepArgs),
    /// Compare the filter and the planner against their brute-force oracles.
    Validate(ValidateArgs),
    /// Run the heart-rate estimator on synthetic single-pixel signals.
    HrTest(HrTestArgs),
    /// Print the fully defaulted scenario file.
    DefaultConfig,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override run.steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Override run.parallel.
    #[arg(long)]
    parallel: Option<bool>,
}

impl ScenarioArgs {
    /// Reads the file, applies overrides, then validates.
    fn load(&self) -> anyhow::Result<ScenarioConfig> {
        let mut cfg: ScenarioConfig = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| config_err(format!("reading {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(beamsteer_core::Error::from)?
            }
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
        }
        if let Some(steps) = self.steps {
            cfg.run.steps = steps;
        }
        if let Some(p) = self.parallel {
            cfg.run.parallel = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Policy override: adaptive, fixed, fixed:<angle>.
    #[arg(long)]
    policy: Option<String>,
    /// Trace CSV path; overrides run.outputs.trace. `-` for stdout.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Summary JSON path; overrides run.outputs.summary. Printed to stdout
    /// when no path is configured.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// SNR values in dB.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 10.0, 20.0])]
    snr: Vec<f64>,
    /// Policies: adaptive, fixed, fixed:<angle>.
    #[arg(long, value_delimiter = ',', default_values_t = vec!["adaptive".to_string(), "fixed:0".to_string()])]
    policies: Vec<String>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Output CSV; stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Also write every individual run as JSON.
    #[arg(long)]
    runs_json: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Seeds for the filter comparison.
    #[arg(long, default_value_t = 3)]
    filter_seeds: u64,
    #[arg(long, default_value_t = 10)]
    filter_steps: usize,
    #[arg(long, default_value_t = 10_000)]
    particles: usize,
    /// Grid spacing of the exact filter (rad).
    #[arg(long, default_value_t = 1e-3)]
    resolution: f64,
    /// Largest accepted |filter mean - oracle mean| (rad).
    #[arg(long, default_value_t = 0.02)]
    tolerance: f64,
    #[arg(long, default_value_t = 10)]
    planner_trials: u64,
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
    /// Write the per-case details as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct HrTestArgs {
    /// Heart rates to synthesize.
    #[arg(long, value_delimiter = ',', default_values_t = vec![110.0, 120.0, 140.0, 160.0])]
    bpm: Vec<f64>,
    #[arg(long, default_value_t = 1500.0)]
    prf: f64,
    #[arg(long, default_value_t = 1.0)]
    ensemble_s: f64,
    /// Consecutive frames per heart rate.
    #[arg(long, default_value_t = 1)]
    frames: usize,
    /// Power Doppler SNR in dB; noiseless when omitted.
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    mod_index: f64,
    #[arg(long, default_value_t = 0.5)]
    asymmetry: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Search band, low,high in bpm.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    band: Option<Vec<f64>>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Validate(a) => validate(a),
        Command::HrTest(a) => hr_test(a),
        Command::DefaultConfig => default_config(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let config = e.chain().any(|c| {
        c.downcast_ref::<beamsteer_core::Error>().is_some_and(|e| e.is_config())
            || c.downcast_ref::<ConfigError>().is_some()
    });
    if config {
        1
    } else {
        2
    }
}

/// Bad command-line values caught after parsing.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn output(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) if p.as_os_str() != "-" => {
            Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?))
        }
        _ => Box::new(io::stdout().lock()),
    })
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let mut cfg = args.scenario.load()?;
    if let Some(p) = &args.policy {
        cfg.policy = Policy::parse(p)?;
        cfg.validate()?;
    }
    let policy = cfg.policy.clone();
    let run = run_with_policy(&cfg, &policy)?;
    let n_actions = cfg.agent.actions.count;
    let timing = cfg.run.trace_timing;

    let trace_path = args.trace.or_else(|| cfg.run.outputs.trace.clone());
    match &trace_path {
        Some(p) if p.as_os_str() == "-" => write_trace(io::stdout().lock(), &run.trace, n_actions, timing)?,
        Some(p) => write_trace_file(p, &run.trace, n_actions, timing)
            .with_context(|| format!("writing trace {}", p.display()))?,
        None => {}
    }
    match args.summary.or_else(|| cfg.run.outputs.summary.clone()) {
        Some(p) => write_summary_file(&p, &run.summary).with_context(|| format!("writing summary {}", p.display()))?,
        None if trace_path.as_ref().is_some_and(|p| p.as_os_str() == "-") => {
            eprintln!(
                "tracking MAE {:.4} rad, HR accuracy {:.3}, mean step latency {:.3} s",
                run.summary.tracking_mae_rad, run.summary.hr_accuracy_5bpm, run.summary.mean_step_latency_s
            );
        }
        None => println!("{}", serde_json::to_string_pretty(&run.summary)?),
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> anyhow::Result<()> {
    let cfg = args.scenario.load()?;
    let policies = args
        .policies
        .iter()
        .map(|p| Policy::parse(p))
        .collect::<Result<Vec<_>, _>>()?;
    let result = snr_sweep(&cfg, &args.snr, &policies, args.repeats)?;
    write_sweep(output(&args.out)?, &result.rows)?;
    if let Some(p) = &args.runs_json {
        std::fs::write(p, serde_json::to_string_pretty(&result.runs)?)
            .with_context(|| format!("writing {}", p.display()))?;
    }
    let failed: usize = result.rows.iter().map(|r| r.failed).sum();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed; see the errors column", result.runs.len());
    }
    Ok(())
}

fn validate(args: ValidateArgs) -> anyhow::Result<()> {
    let cfg = args.scenario.load()?;
    if args.particles < 2 || args.filter_steps == 0 {
        return Err(config_err("need at least 2 particles and 1 step"));
    }
    let filter = filter_oracle_suite(&cfg, args.filter_seeds, args.filter_steps, args.particles, args.resolution)?;
    let mut ok = true;
    for c in &filter {
        if let Some(w) = &c.warning {
            eprintln!("warning: {w}");
        }
        let pass = c.max_abs_diff <= args.tolerance;
        ok &= pass;
        println!(
            "filter  seed {:>3}: max |PF - grid| = {:.5} rad  {}",
            c.seed,
            c.max_abs_diff,
            if pass { "ok" } else { "FAIL" }
        );
    }
    let planner = planner_oracle_suite(cfg.run.seed, args.planner_trials, args.draws)?;
    for c in &planner {
        ok &= c.agrees();
        println!(
            "planner trial {:>2}: planner {:+.2}, oracle {:+.2}  {}",
            c.trial,
            c.planner_action,
            c.oracle_action,
            if c.agrees() { "ok" } else { "FAIL" }
        );
    }
    if let Some(p) = &args.report {
        let doc = serde_json::json!({ "filter": filter, "planner": planner });
        std::fs::write(p, serde_json::to_string_pretty(&doc)?)?;
    }
    if !ok {
        bail!("oracle checks failed");
    }
    Ok(())
}

fn hr_test(args: HrTestArgs) -> anyhow::Result<()> {
    if args.frames == 0 {
        return Err(config_err("--frames must be positive"));
    }
    let mut settings = beamsteer_core::HrSettings::default();
    if let Some(b) = &args.band {
        settings.band_bpm = [b[0], b[1]];
    }
    settings.validate().map_err(|e| config_err(e.to_string()))?;
    let mut out = io::stdout().lock();
    writeln!(out, "bpm_true,frame,bpm_est,error_bpm,confidence")?;
    for &bpm in &args.bpm {
        let mut env_cfg = EnvConfig {
            trajectory: TrajectoryConfig::stationary(0.0),
            prf_hz: args.prf,
            ensemble_s: args.ensemble_s,
            ..EnvConfig::default()
        };
        env_cfg.target.hr_bpm = bpm;
        env_cfg.target.mod_index = args.mod_index;
        env_cfg.target.motion_asymmetry = args.asymmetry;
        env_cfg.noise.snr_db = args.snr_db;
        env_cfg.range = RangeGridConfig {
            min_m: env_cfg.target.depth_m,
            max_m: env_cfg.target.depth_m + 0.01,
            count: 1,
        };
        let grid = AngleGrid::new(vec![0.0])?;
        let env = Environment::new(env_cfg, grid, args.seed).map_err(|e| config_err(e.to_string()))?;
        for t in 0..args.frames {
            let signal = env.synthesize_pixel(t, Transmit::Unit, 0, 0)?;
            // Only bad arguments (band against ensemble length) can fail here.
            let est = estimate_hr(&signal, args.prf, &settings).map_err(|e| config_err(e.to_string()))?;
            let (b, err) = match est.bpm {
                Some(b) => (b.to_string(), (b - bpm).to_string()),
                None => (String::new(), String::new()),
            };
            writeln!(out, "{bpm},{t},{b},{err},{}", est.confidence)?;
        }
    }
    Ok(())
}

fn default_config() -> anyhow::Result<()> {
    println!("{}", ScenarioConfig::default().to_json()?);
    Ok(())
}
