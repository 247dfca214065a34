//! Closed perception-action loop.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ObservationScale, Policy, ScenarioConfig};
use super::metrics::{summarize, ScenarioSummary};
use crate::doppler::{self, ClutterOrder, SlowTimeEnsemble};
use crate::environment::{Environment, ProfileCalibration};
use crate::filter::{self, ParticleSet};
use crate::model::AgentConfig;
use crate::planner;
use crate::rng::{keyed_stream, tag, SimRng};
use crate::{Error, Result};

/// Everything recorded about one step of the loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub x_gt: f64,
    pub action: f64,
    pub x_star: f64,
    pub posterior_std: f64,
    /// ESS of the reweighted particles, before any resampling.
    pub ess: f64,
    pub resampled: bool,
    pub r_star: usize,
    pub hr_bpm: Option<f64>,
    pub hr_confidence: f64,
    /// Planner entropies in action-set order; `None` for open-loop policies.
    pub action_scores: Option<Vec<f64>>,
    /// Plan plus perceive time, excluding synthesis of the world.
    pub wall_time_s: f64,
    /// The likelihood was degenerate and the particles were redrawn.
    pub reinitialized: bool,
    /// Divisor applied to the profile before the filter update.
    pub profile_scale: f64,
}

/// A processed profile and the action it was taken under.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub action: f64,
    pub x_gt: f64,
    pub y: Vec<f64>,
}

/// Clutter filter, power Doppler and profile scaling of one ensemble.
/// The ensemble is filtered in place.
pub(crate) struct Perceiver {
    scale: ObservationScale,
    calibration: ProfileCalibration,
    order: ClutterOrder,
}

impl Perceiver {
    pub(crate) fn new(config: &ScenarioConfig, env: &Environment) -> Self {
        Self {
            scale: config.agent.observation_scale,
            calibration: env.profile_calibration(),
            order: config.agent.clutter_filter,
        }
    }

    /// Returns the frame, the scaled profile and the divisor used.
    pub(crate) fn observe(
        &self,
        ensemble: &mut SlowTimeEnsemble,
        action: f64,
        parallel: bool,
    ) -> (doppler::PowerDopplerFrame, Vec<f64>, f64) {
        doppler::clutter_filter_in_place(ensemble, self.order, parallel);
        let frame = doppler::power_doppler(ensemble, action, parallel);
        let (y, scale) = match self.scale {
            ObservationScale::Calibrated => (
                self.calibration.apply(frame.profile()),
                self.calibration.unit_response,
            ),
            ObservationScale::Max => {
                let m = frame.profile().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                // A non-positive maximum leaves nothing to scale; the filter
                // will see a non-finite profile and flag the step.
                let y = frame.profile().iter().map(|p| p / m).collect();
                (y, m)
            }
        };
        (frame, y, scale)
    }
}

/// Output of a scenario run.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub trace: Vec<StepRecord>,
    pub summary: ScenarioSummary,
}

/// Runs the scenario under its own policy.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioRun> {
    run_with_policy(config, &config.policy)
}

/// Runs the scenario under `policy`, which replaces the configured one.
pub fn run_with_policy(config: &ScenarioConfig, policy: &Policy) -> Result<ScenarioRun> {
    let mut config = config.clone();
    config.policy = policy.clone();
    config.validate()?;
    let agent = config.agent_config()?;
    let steps = config.run.steps;
    let parallel = config.run.parallel;

    let mut env = Environment::new(config.environment.clone(), agent.grid.clone(), config.run.seed)
        .map_err(|e| Error::Config(e.to_string()))?;
    let perceiver = Perceiver::new(&config, &env);
    let mut rng = keyed_stream(config.run.seed, &[tag::AGENT]);
    let mut particles = filter::init_particles(&agent, &mut rng);
    let prf = config.environment.prf_hz;

    let mut trace = Vec::with_capacity(steps);
    for t in 0..steps {
        let record = (|| -> Result<StepRecord> {
            let plan_start = Instant::now();
            let (action, action_scores) = match policy.open_loop_action(t) {
                Some(a) => (a, None),
                None => {
                    let sel = planner::select_action(&particles, &agent, &mut rng, parallel)?;
                    (sel.action, Some(sel.scores.iter().map(|s| s.entropy).collect()))
                }
            };
            let plan_time = plan_start.elapsed();

            let mut step = env.step(action, parallel)?;

            let perceive_start = Instant::now();
            let (frame, y, profile_scale) = perceiver.observe(&mut step.ensemble, action, parallel);
            let (summary, ess, resampled, reinitialized) =
                match filter::filter_step(&particles, &y, action, &agent, &mut rng) {
                    Ok(fs) => {
                        particles = fs.particles;
                        (fs.summary, fs.ess_before_resample, fs.resampled, false)
                    }
                    Err(Error::DegenerateLikelihood(_)) => {
                        particles = filter::init_particles(&agent, &mut rng);
                        let s = filter::posterior_summary(&particles);
                        (s, s.ess, false, true)
                    }
                    Err(e) => return Err(e),
                };
            let loc = doppler::locate_range(&frame, summary.mean, &agent.grid)?;
            let hr = doppler::estimate_hr(
                step.ensemble.pixel(loc.column, loc.r_star),
                prf,
                &config.agent.hr,
            )?;
            let wall_time_s = (plan_time + perceive_start.elapsed()).as_secs_f64();
            env.recycle(step.ensemble);

            Ok(StepRecord {
                t,
                x_gt: step.x_gt,
                action,
                x_star: summary.mean,
                posterior_std: summary.std,
                ess,
                resampled,
                r_star: loc.r_star,
                hr_bpm: hr.bpm,
                hr_confidence: hr.confidence,
                action_scores,
                wall_time_s,
                reinitialized,
                profile_scale,
            })
        })()
        .map_err(|e| e.at_step(t))?;
        trace.push(record);
    }

    let summary = summarize(&trace, &config)?;
    Ok(ScenarioRun { trace, summary })
}

/// Processed profiles for an open-loop action sequence, one per action.
pub fn scripted_observations(config: &ScenarioConfig, actions: &[f64]) -> Result<Vec<Observation>> {
    let agent = config.agent_config()?;
    let mut env = Environment::new(config.environment.clone(), agent.grid.clone(), config.run.seed)?;
    let perceiver = Perceiver::new(config, &env);
    actions
        .iter()
        .map(|&a| {
            let mut step = env.step(a, config.run.parallel)?;
            let (_, y, _) = perceiver.observe(&mut step.ensemble, a, config.run.parallel);
            env.recycle(step.ensemble);
            Ok(Observation {
                action: a,
                x_gt: step.x_gt,
                y,
            })
        })
        .collect()
}

/// Particle-filter posterior means over a fixed observation sequence.
pub fn filter_means(agent: &AgentConfig, observations: &[Observation], rng: &mut SimRng) -> Result<Vec<f64>> {
    let mut particles: ParticleSet = filter::init_particles(agent, rng);
    observations
        .iter()
        .map(|o| {
            let fs = filter::filter_step(&particles, &o.y, o.action, agent, rng)?;
            particles = fs.particles;
            Ok(fs.summary.mean)
        })
        .collect()
}
