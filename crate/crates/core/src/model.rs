//! The agent's generative model.
//!
//! The state is a single angle `x` (radians). Given a steering action `a`,
//! the expected depth-integrated power Doppler profile over the image angles
//! `Θ` is the product of a transmit beam centred on `a` and a target
//! envelope centred on `x`:
//!
//! ```text
//! f_y(x; a)[j] = exp(-(Θ_j - a)² / (2 bw)) · exp(-(Θ_j - x)² / (2 hw))
//! ```
//!
//! The transition is a Gaussian random walk with std `sigma_x`, and the
//! observation is `f_y` plus isotropic Gaussian noise with std `sigma_y`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Image angles of the polar grid, strictly increasing and uniformly spaced.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleGrid {
    angles: Vec<f64>,
}

impl AngleGrid {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::invalid("angle grid is empty"));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("angle grid contains non-finite values"));
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("angle grid must be strictly increasing"));
        }
        if angles.len() > 2 {
            let step = (angles[angles.len() - 1] - angles[0]) / (angles.len() - 1) as f64;
            let uniform = angles
                .windows(2)
                .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-12 * step);
            if !uniform {
                return Err(Error::invalid("angle grid must be uniformly spaced"));
            }
        }
        Ok(Self { angles })
    }

    /// `count` uniformly spaced angles covering `[min, max]`.
    pub fn uniform(min: f64, max: f64, count: usize) -> Result<Self> {
        Self::new(linspace(min, max, count)?)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.angles[0]
    }

    pub fn max(&self) -> f64 {
        self.angles[self.angles.len() - 1]
    }

    /// Spacing between neighbouring angles (0 for a single-angle grid).
    pub fn step(&self) -> f64 {
        if self.angles.len() < 2 {
            0.0
        } else {
            (self.max() - self.min()) / (self.angles.len() - 1) as f64
        }
    }

    /// Index of the grid angle nearest to `x`, ties going to the smaller
    /// index. The second value is true when `x` lies outside the grid span.
    pub fn nearest(&self, x: f64) -> (usize, bool) {
        let outside = x < self.min() || x > self.max();
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, &t) in self.angles.iter().enumerate() {
            let d = (t - x).abs();
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        (best, outside)
    }
}

impl Default for AngleGrid {
    fn default() -> Self {
        Self::uniform(-0.8, 0.8, 129).expect("default grid is valid")
    }
}

/// Admissible transmit steering angles.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSet {
    angles: Vec<f64>,
}

impl ActionSet {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::invalid("action set is empty"));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("action set contains non-finite values"));
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("action set must be strictly increasing"));
        }
        Ok(Self { angles })
    }

    pub fn uniform(min: f64, max: f64, count: usize) -> Result<Self> {
        Self::new(linspace(min, max, count)?)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.angles[0]
    }

    pub fn max(&self) -> f64 {
        self.angles[self.angles.len() - 1]
    }

    pub fn contains_range(&self, a: f64) -> bool {
        a >= self.min() - 1e-12 && a <= self.max() + 1e-12
    }
}

impl Default for ActionSet {
    fn default() -> Self {
        Self::uniform(-0.7, 0.7, 21).expect("default action set is valid")
    }
}

/// Widths (variance-like, rad²) of the transmit beam and the target envelope.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamModelParams {
    pub bw: f64,
    pub hw: f64,
}

impl BeamModelParams {
    pub fn new(bw: f64, hw: f64) -> Result<Self> {
        let p = Self { bw, hw };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bw > 0.0 && self.bw.is_finite()) {
            return Err(Error::invalid(format!("bw must be positive, got {}", self.bw)));
        }
        if !(self.hw > 0.0 && self.hw.is_finite()) {
            return Err(Error::invalid(format!("hw must be positive, got {}", self.hw)));
        }
        Ok(())
    }
}

impl Default for BeamModelParams {
    fn default() -> Self {
        Self { bw: 1.0e-2, hw: 2.5e-3 }
    }
}

/// Generative-model and planner parameters of the agent.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub beam: BeamModelParams,
    pub n_particles: usize,
    /// Resample when ESS falls below this fraction of `n_particles`.
    pub resample_threshold: f64,
    pub cov_jitter: f64,
    pub grid: AngleGrid,
    pub actions: ActionSet,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            sigma_x: 0.15,
            sigma_y: 0.01,
            beam: BeamModelParams::default(),
            n_particles: 1000,
            resample_threshold: 0.5,
            cov_jitter: 1e-9,
            grid: AngleGrid::default(),
            actions: ActionSet::default(),
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_x > 0.0 && self.sigma_x.is_finite()) {
            return Err(Error::invalid("sigma_x must be positive"));
        }
        if !(self.sigma_y > 0.0 && self.sigma_y.is_finite()) {
            return Err(Error::invalid("sigma_y must be positive"));
        }
        self.beam.validate()?;
        if self.n_particles < 2 {
            return Err(Error::invalid("n_particles must be at least 2"));
        }
        if !(self.resample_threshold > 0.0 && self.resample_threshold <= 1.0) {
            return Err(Error::invalid("resample_threshold must lie in (0, 1]"));
        }
        if !(self.cov_jitter >= 0.0 && self.cov_jitter.is_finite()) {
            return Err(Error::invalid("cov_jitter must be non-negative"));
        }
        if self.grid.min() > self.actions.min() || self.grid.max() < self.actions.max() {
            return Err(Error::invalid("angle grid must span the action set"));
        }
        Ok(())
    }
}

pub(crate) fn linspace(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::invalid("count must be positive"));
    }
    if !(min.is_finite() && max.is_finite()) {
        return Err(Error::invalid("range bounds must be finite"));
    }
    if count == 1 {
        return Ok(vec![min]);
    }
    if max <= min {
        return Err(Error::invalid("range max must exceed min"));
    }
    let step = (max - min) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| if i + 1 == count { max } else { min + step * i as f64 })
        .collect())
}

/// Transmit beam factor `exp(-(Θ_j - a)² / (2 bw))` for every grid angle.
pub fn beam_profile(a: f64, grid: &AngleGrid, bw: f64) -> Vec<f64> {
    grid.angles()
        .iter()
        .map(|&t| (-(t - a) * (t - a) / (2.0 * bw)).exp())
        .collect()
}

/// Expected observation `f_y(x; a)` on `grid`.
pub fn beam_target_response(
    x: f64,
    a: f64,
    grid: &AngleGrid,
    beam: &BeamModelParams,
) -> Result<Vec<f64>> {
    if !x.is_finite() || !a.is_finite() {
        return Err(Error::invalid(format!("non-finite position {x} or action {a}")));
    }
    let mut out = Vec::with_capacity(grid.len());
    response_into(x, a, grid.angles(), beam, &mut out);
    Ok(out)
}

pub(crate) fn response_into(x: f64, a: f64, angles: &[f64], beam: &BeamModelParams, out: &mut Vec<f64>) {
    out.clear();
    out.extend(angles.iter().map(|&t| {
        let e = (t - a) * (t - a) / (2.0 * beam.bw) + (t - x) * (t - x) / (2.0 * beam.hw);
        (-e).exp()
    }));
}

/// One draw from the random-walk transition `N(x_prev, sigma_x²)`.
pub fn sample_transition<R: Rng + ?Sized>(x_prev: f64, sigma_x: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    x_prev + sigma_x * z
}

/// Gaussian log-density of `y` given the state and action.
pub fn log_likelihood(
    y: &[f64],
    x: f64,
    a: f64,
    grid: &AngleGrid,
    beam: &BeamModelParams,
    sigma_y: f64,
) -> Result<f64> {
    if y.len() != grid.len() {
        return Err(Error::Shape {
            expected: grid.len(),
            actual: y.len(),
        });
    }
    if !(sigma_y > 0.0) {
        return Err(Error::invalid("sigma_y must be positive"));
    }
    let mean = beam_target_response(x, a, grid, beam)?;
    Ok(gaussian_log_density(y, &mean, sigma_y))
}

pub(crate) fn gaussian_log_density(y: &[f64], mean: &[f64], sigma_y: f64) -> f64 {
    let var = sigma_y * sigma_y;
    let sq: f64 = y.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * y.len() as f64 * (LN_2PI + var.ln()) - sq / (2.0 * var)
}
