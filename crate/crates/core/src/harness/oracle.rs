//! Slow reference implementations used to check the filter and the planner.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::runner::Observation;
use crate::model::{self, AgentConfig};
use crate::planner::Hypotheses;
use crate::{Error, Result};

/// Posterior moments from the dense-grid Bayes recursion.
#[derive(Clone, Debug, PartialEq)]
pub struct GridOracle {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Set when the grid spacing exceeds `sigma_x / 4`.
    pub warning: Option<String>,
}

/// Exact Bayes filter on a dense angle grid with the agent's model.
///
/// The prior is uniform over the agent's angle span, as for the particle
/// filter. The state grid extends `6 sigma_x sqrt(T)` beyond that span so
/// that the random walk does not lose mass at the edges.
pub fn grid_filter_oracle(agent: &AgentConfig, observations: &[Observation], resolution: f64) -> Result<GridOracle> {
    agent.validate()?;
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::invalid("resolution must be positive"));
    }
    let warning = (resolution > agent.sigma_x / 4.0).then(|| {
        format!(
            "grid resolution {resolution} is coarser than sigma_x / 4 = {}",
            agent.sigma_x / 4.0
        )
    });
    let margin = 6.0 * agent.sigma_x * (observations.len().max(1) as f64).sqrt();
    let lo = agent.grid.min() - margin;
    let n = ((agent.grid.max() + margin - lo) / resolution).ceil() as usize + 1;
    let xs: Vec<f64> = (0..n).map(|i| lo + i as f64 * resolution).collect();

    let mut p: Vec<f64> = xs
        .iter()
        .map(|&x| if x >= agent.grid.min() && x <= agent.grid.max() { 1.0 } else { 0.0 })
        .collect();
    normalize(&mut p)?;

    let half = (6.0 * agent.sigma_x / resolution).ceil() as usize;
    let kernel: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let d = (i as f64 - half as f64) * resolution;
            (-d * d / (2.0 * agent.sigma_x * agent.sigma_x)).exp()
        })
        .collect();
    let ksum: f64 = kernel.iter().sum();

    let mut means = Vec::with_capacity(observations.len());
    let mut stds = Vec::with_capacity(observations.len());
    let mut row = Vec::new();
    for obs in observations {
        if obs.y.len() != agent.grid.len() {
            return Err(Error::Shape {
                expected: agent.grid.len(),
                actual: obs.y.len(),
            });
        }
        // Transition.
        let pmax = p.iter().cloned().fold(0.0, f64::max);
        let mut next = vec![0.0; n];
        for (i, &mass) in p.iter().enumerate() {
            if mass <= pmax * 1e-18 {
                continue;
            }
            let from = i.saturating_sub(half);
            let to = (i + half).min(n - 1);
            for (k, slot) in next[from..=to].iter_mut().enumerate() {
                *slot += mass * kernel[from + k + half - i] / ksum;
            }
        }
        // Update, in the log domain.
        let mut logp: Vec<f64> = next
            .iter()
            .zip(&xs)
            .map(|(&m, &x)| {
                if m <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                model::response_into(x, obs.action, agent.grid.angles(), &agent.beam, &mut row);
                m.ln() + model::gaussian_log_density(&obs.y, &row, agent.sigma_y)
            })
            .collect();
        let top = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::DegenerateLikelihood("oracle posterior vanished".into()));
        }
        logp.iter_mut().for_each(|v| *v = (*v - top).exp());
        p = logp;
        normalize(&mut p)?;

        let mean: f64 = p.iter().zip(&xs).map(|(w, x)| w * x).sum();
        let var: f64 = p.iter().zip(&xs).map(|(w, x)| w * (x - mean) * (x - mean)).sum();
        means.push(mean);
        stds.push(var.max(0.0).sqrt());
    }
    Ok(GridOracle { means, stds, warning })
}

fn normalize(p: &mut [f64]) -> Result<()> {
    let s: f64 = p.iter().sum();
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Numerical("grid posterior has no mass".into()));
    }
    p.iter_mut().for_each(|v| *v /= s);
    Ok(())
}

/// Brute-force entropies of the predicted observation per action.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyOracle {
    pub action: f64,
    /// Differential entropy (nats) of a full-covariance Gaussian fitted to
    /// the simulated observations, in action-set order.
    pub entropies: Vec<f64>,
}

/// Monte Carlo version of the planner criterion for small problems.
///
/// Draws `draws` hypotheses by weight, adds observation noise, fits a
/// Gaussian and takes its entropy. The same draws are reused for every
/// action.
pub fn entropy_oracle<R: Rng + ?Sized>(
    hyp: &Hypotheses,
    agent: &AgentConfig,
    draws: usize,
    rng: &mut R,
) -> Result<EntropyOracle> {
    let d = agent.grid.len();
    let actions = agent.actions.angles();
    if d > 4 || actions.len() > 5 {
        return Err(Error::invalid("entropy oracle is limited to 4 angles and 5 actions"));
    }
    if draws < d + 1 {
        return Err(Error::invalid("too few draws for a covariance fit"));
    }
    if hyp.states.is_empty() || hyp.states.len() != hyp.weights.len() {
        return Err(Error::invalid("hypotheses and weights must be non-empty and aligned"));
    }
    let mut cdf = Vec::with_capacity(hyp.weights.len());
    let mut acc = 0.0;
    for &w in &hyp.weights {
        acc += w;
        cdf.push(acc);
    }
    let picks: Vec<usize> = (0..draws)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
        })
        .collect();
    let noise: Vec<f64> = (0..draws * d)
        .map(|_| agent.sigma_y * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let mut entropies = Vec::with_capacity(actions.len());
    let mut row = Vec::new();
    for &a in actions {
        let mut mean = vec![0.0; d];
        let mut samples = vec![0.0; draws * d];
        for (s, &i) in picks.iter().enumerate() {
            model::response_into(hyp.states[i], a, agent.grid.angles(), &agent.beam, &mut row);
            for j in 0..d {
                let v = row[j] + noise[s * d + j];
                samples[s * d + j] = v;
                mean[j] += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= draws as f64);
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for s in 0..draws {
            for r in 0..d {
                let u = samples[s * d + r] - mean[r];
                for c in 0..=r {
                    cov[(r, c)] += u * (samples[s * d + c] - mean[c]);
                }
            }
        }
        for r in 0..d {
            for c in 0..=r {
                let v = cov[(r, c)] / (draws - 1) as f64;
                cov[(r, c)] = v;
                cov[(c, r)] = v;
            }
        }
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Numerical("sample covariance is not positive definite".into()))?;
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let ln_2pi_e = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        entropies.push(0.5 * (d as f64 * ln_2pi_e + logdet));
    }
    let best = entropies
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v > entropies[b] { i } else { b });
    Ok(EntropyOracle {
        action: actions[best],
        entropies,
    })
}
