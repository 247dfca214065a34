//! Particle filter over the target's angular position.
//!
//! A step is predict (random-walk kernel), reweight by the observation
//! likelihood in the log domain, and systematic resampling when the effective
//! sample size drops below `resample_threshold * N_p`. No jitter is added after
//! resampling; the next prediction already diversifies the copies.

use rand::Rng;

use crate::model::{self, AgentConfig, BeamModelParams};
use crate::{Error, Result};

/// Weighted samples approximating the filtering posterior.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    positions: Vec<f64>,
    weights: Vec<f64>,
    generation: u64,
}

impl ParticleSet {
    /// Builds a set from explicit positions and (unnormalized) weights.
    pub fn new(positions: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("particle set is empty"));
        }
        if positions.len() != weights.len() {
            return Err(Error::Shape {
                expected: positions.len(),
                actual: weights.len(),
            });
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("particle positions must be finite"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("particle weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("particle weights sum to zero"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            positions,
            weights,
            generation: 0,
        })
    }

    /// Equally weighted particles at the given positions.
    pub fn uniform(positions: Vec<f64>) -> Result<Self> {
        let n = positions.len();
        Self::new(positions, vec![1.0; n])
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Point estimate and spread of the posterior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub std: f64,
    pub ess: f64,
}

/// Output of one perception step.
#[derive(Clone, Debug)]
pub struct FilterStep {
    pub particles: ParticleSet,
    pub summary: PosteriorSummary,
    /// ESS after reweighting, before any resampling.
    pub ess_before_resample: f64,
    pub resampled: bool,
}

/// Uniform prior over the span of the agent's angle grid.
pub fn init_particles<R: Rng + ?Sized>(config: &AgentConfig, rng: &mut R) -> ParticleSet {
    let (lo, hi) = (config.grid.min(), config.grid.max());
    let n = config.n_particles;
    let positions = (0..n)
        .map(|_| {
            if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            }
        })
        .collect();
    ParticleSet {
        positions,
        weights: vec![1.0 / n as f64; n],
        generation: 0,
    }
}

/// Time update: every particle moves through the transition kernel.
pub fn predict<R: Rng + ?Sized>(particles: &ParticleSet, sigma_x: f64, rng: &mut R) -> ParticleSet {
    let positions = particles
        .positions
        .iter()
        .map(|&x| model::sample_transition(x, sigma_x, rng))
        .collect();
    ParticleSet {
        positions,
        weights: particles.weights.clone(),
        generation: particles.generation,
    }
}

/// Measurement update with observation `y` taken under steering angle `a`.
pub fn update_weights(
    particles: &ParticleSet,
    y: &[f64],
    a: f64,
    config: &AgentConfig,
) -> Result<ParticleSet> {
    let grid = &config.grid;
    if y.len() != grid.len() {
        return Err(Error::Shape {
            expected: grid.len(),
            actual: y.len(),
        });
    }
    if !a.is_finite() {
        return Err(Error::invalid("action must be finite"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateLikelihood(
            "observation contains non-finite values".into(),
        ));
    }

    let log_w = log_weights(particles, y, a, grid.angles(), &config.beam, config.sigma_y);
    let weights = normalize_log_weights(&log_w)?;
    Ok(ParticleSet {
        positions: particles.positions.clone(),
        weights,
        generation: particles.generation + 1,
    })
}

fn log_weights(
    particles: &ParticleSet,
    y: &[f64],
    a: f64,
    angles: &[f64],
    beam: &BeamModelParams,
    sigma_y: f64,
) -> Vec<f64> {
    // The beam factor does not depend on the particle.
    let tx: Vec<f64> = angles
        .iter()
        .map(|&t| (-(t - a) * (t - a) / (2.0 * beam.bw)).exp())
        .collect();
    let inv_2var = 1.0 / (2.0 * sigma_y * sigma_y);
    particles
        .positions
        .iter()
        .zip(&particles.weights)
        .map(|(&x, &w)| {
            let sq: f64 = angles
                .iter()
                .zip(&tx)
                .zip(y)
                .map(|((&t, &g), &obs)| {
                    let f = g * (-(t - x) * (t - x) / (2.0 * beam.hw)).exp();
                    (obs - f) * (obs - f)
                })
                .sum();
            // Constant terms of the Gaussian density cancel on normalization.
            w.ln() - sq * inv_2var
        })
        .collect()
}

/// Exponentiates log-weights after max subtraction and normalizes.
pub(crate) fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateLikelihood(format!(
            "maximum log-weight is {max}"
        )));
    }
    let mut w: Vec<f64> = log_w.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateLikelihood("all weights vanished".into()));
    }
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// `1 / Σ w²`.
pub fn effective_sample_size(particles: &ParticleSet) -> f64 {
    1.0 / particles.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Systematic resampling: one uniform offset, `N_p` evenly spaced pointers
/// into the cumulative weights. Output weights are uniform.
pub fn systematic_resample<R: Rng + ?Sized>(particles: &ParticleSet, rng: &mut R) -> ParticleSet {
    let n = particles.len();
    let offset: f64 = rng.random::<f64>();
    let step = 1.0 / n as f64;
    let mut positions = Vec::with_capacity(n);
    let mut cumulative = particles.weights[0];
    let mut i = 0;
    for m in 0..n {
        let u = (offset + m as f64) * step;
        while u > cumulative && i + 1 < n {
            i += 1;
            cumulative += particles.weights[i];
        }
        positions.push(particles.positions[i]);
    }
    ParticleSet {
        positions,
        weights: vec![step; n],
        generation: particles.generation,
    }
}

pub fn posterior_summary(particles: &ParticleSet) -> PosteriorSummary {
    let mean: f64 = particles
        .positions
        .iter()
        .zip(&particles.weights)
        .map(|(x, w)| x * w)
        .sum();
    // Guard the convex-hull property against rounding.
    let (lo, hi) = particles
        .positions
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    let mean = mean.clamp(lo, hi);
    let var: f64 = particles
        .positions
        .iter()
        .zip(&particles.weights)
        .map(|(x, w)| w * (x - mean) * (x - mean))
        .sum();
    PosteriorSummary {
        mean,
        std: var.max(0.0).sqrt(),
        ess: effective_sample_size(particles).clamp(1.0, particles.len() as f64),
    }
}

/// Predict, reweight, resample if degenerate, summarize.
pub fn filter_step<R: Rng + ?Sized>(
    particles: &ParticleSet,
    y: &[f64],
    a: f64,
    config: &AgentConfig,
    rng: &mut R,
) -> Result<FilterStep> {
    let predicted = predict(particles, config.sigma_x, rng);
    let updated = update_weights(&predicted, y, a, config)?;
    let ess = effective_sample_size(&updated);
    let summary = posterior_summary(&updated);
    let resampled = ess < config.resample_threshold * config.n_particles as f64;
    let particles = if resampled {
        systematic_resample(&updated, rng)
    } else {
        updated
    };
    Ok(FilterStep {
        particles,
        summary,
        ess_before_resample: ess,
        resampled,
    })
}
