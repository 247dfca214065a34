//! Oracle comparison suites shared by the CLI and the acceptance target.

use rand::Rng;
use serde::Serialize;

use super::config::ScenarioConfig;
use super::oracle::{entropy_oracle, grid_filter_oracle};
use super::runner::{filter_means, scripted_observations};
use crate::filter::ParticleSet;
use crate::model::{ActionSet, AgentConfig, AngleGrid};
use crate::planner::{propagate_hypotheses, select_from_hypotheses};
use crate::rng::{keyed_stream, tag};
use crate::Result;

#[derive(Clone, Debug, Serialize)]
pub struct FilterOracleCase {
    pub seed: u64,
    pub actions: Vec<f64>,
    pub filter_means: Vec<f64>,
    pub oracle_means: Vec<f64>,
    pub max_abs_diff: f64,
    pub warning: Option<String>,
}

/// Particle filter against the grid Bayes filter on random open-loop
/// scripts through the scenario's environment. Seed `i` of `seeds` drives
/// the world, the script and the particles.
pub fn filter_oracle_suite(
    base: &ScenarioConfig,
    seeds: u64,
    steps: usize,
    n_particles: usize,
    resolution: f64,
) -> Result<Vec<FilterOracleCase>> {
    (0..seeds)
        .map(|i| {
            let mut cfg = base.clone();
            let seed = base.run.seed.wrapping_add(i);
            cfg.run.seed = seed;
            cfg.agent.n_particles = n_particles;
            let agent = cfg.agent_config()?;
            let mut script_rng = keyed_stream(seed, &[tag::ORACLE, 0]);
            let (lo, hi) = (agent.actions.min(), agent.actions.max());
            let actions: Vec<f64> = (0..steps).map(|_| script_rng.random_range(lo..=hi)).collect();
            let obs = scripted_observations(&cfg, &actions)?;
            let pf = filter_means(&agent, &obs, &mut keyed_stream(seed, &[tag::ORACLE, 1]))?;
            let oracle = grid_filter_oracle(&agent, &obs, resolution)?;
            let max_abs_diff = pf
                .iter()
                .zip(&oracle.means)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Ok(FilterOracleCase {
                seed,
                actions,
                filter_means: pf,
                oracle_means: oracle.means,
                max_abs_diff,
                warning: oracle.warning,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct PlannerOracleCase {
    pub trial: u64,
    pub planner_action: f64,
    pub oracle_action: f64,
    pub planner_scores: Vec<f64>,
    pub oracle_entropies: Vec<f64>,
}

impl PlannerOracleCase {
    pub fn agrees(&self) -> bool {
        self.planner_action == self.oracle_action
    }
}

/// Three image angles and three actions at -0.5, 0 and 0.5 rad.
pub fn toy_agent() -> AgentConfig {
    AgentConfig {
        grid: AngleGrid::uniform(-0.5, 0.5, 3).expect("toy grid"),
        actions: ActionSet::uniform(-0.5, 0.5, 3).expect("toy actions"),
        sigma_x: 0.05,
        sigma_y: 0.05,
        ..AgentConfig::default()
    }
}

/// Planner against the Monte Carlo entropy oracle on random one- and
/// two-mode posteriors of the toy problem, sharing the propagated
/// hypotheses.
pub fn planner_oracle_suite(seed: u64, trials: u64, draws: usize) -> Result<Vec<PlannerOracleCase>> {
    let agent = toy_agent();
    (0..trials)
        .map(|trial| {
            let mut rng = keyed_stream(seed, &[tag::ORACLE, 2, trial]);
            let modes = 1 + (trial % 2) as usize;
            let centres: Vec<f64> = (0..modes).map(|_| rng.random_range(-0.6..0.6)).collect();
            let spread = rng.random_range(0.01..0.15);
            let n = 500;
            let positions: Vec<f64> = (0..n)
                .map(|i| centres[i % modes] + spread * (2.0 * rng.random::<f64>() - 1.0))
                .collect();
            let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let particles = ParticleSet::new(positions, weights)?;
            let hyp = propagate_hypotheses(&particles, agent.sigma_x, &mut rng);
            let sel = select_from_hypotheses(&hyp, &agent, false)?;
            let brute = entropy_oracle(&hyp, &agent, draws, &mut rng)?;
            Ok(PlannerOracleCase {
                trial,
                planner_action: sel.action,
                oracle_action: brute.action,
                planner_scores: sel.scores.iter().map(|s| s.entropy).collect(),
                oracle_entropies: brute.entropies,
            })
        })
        .collect()
}
