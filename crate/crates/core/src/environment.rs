//! Synthetic Doppler world on a polar grid.
//!
//! Each frame is a post-beamformed slow-time ensemble. Pixel `(j, k)` holds
//!
//! ```text
//! s[n] = G · g_tx(Θ_j; a) · env(j, k) · exp(iφ(n)) + c · exp(iψ_jk) + w[n]
//! ```
//!
//! with `g_tx = exp(-(Θ_j - a)² / (2 bw_env))` the transmit beam, `G` the
//! amplitude gain of a focused transmit relative to the unfocused SNR
//! reference, `env` a Gaussian envelope around the target, `φ` the wall-motion
//! phase law, `c` static clutter and `w` circular white noise. Noise for pixel
//! `(j, k)` of frame `t` comes from a stream keyed by `(seed, t, j, k)`, so
//! serial, parallel and single-pixel synthesis agree bit for bit.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::doppler::{self, ClutterOrder, SlowTimeEnsemble};
use crate::model::{linspace, AngleGrid};
use crate::rng::{keyed_stream, tag};
use crate::{Error, Result};

/// Ground-truth angular trajectory of the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectoryConfig {
    /// `amplitude · sin(2π t_s / period_s + phase)`, `t_s` in seconds.
    Sinusoidal {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_period")]
        period_s: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Holds each level for `hold_steps` frames; the last level persists.
    PiecewiseConstant { levels: Vec<f64>, hold_steps: usize },
    /// One angle per frame.
    Scripted { angles: Vec<f64> },
}

fn default_amplitude() -> f64 {
    0.6
}

fn default_period() -> f64 {
    20.0
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig::Sinusoidal {
            amplitude: default_amplitude(),
            period_s: default_period(),
            phase: 0.0,
        }
    }
}

impl TrajectoryConfig {
    pub fn stationary(angle: f64) -> Self {
        TrajectoryConfig::PiecewiseConstant {
            levels: vec![angle],
            hold_steps: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TrajectoryConfig::Sinusoidal {
                amplitude,
                period_s,
                phase,
            } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(Error::config("trajectory amplitude must be non-negative"));
                }
                if !(period_s.is_finite() && *period_s > 0.0) {
                    return Err(Error::config("trajectory period must be positive"));
                }
                if !phase.is_finite() {
                    return Err(Error::config("trajectory phase must be finite"));
                }
            }
            TrajectoryConfig::PiecewiseConstant { levels, hold_steps } => {
                if levels.is_empty() || *hold_steps == 0 {
                    return Err(Error::config(
                        "piecewise-constant trajectory needs levels and hold_steps > 0",
                    ));
                }
                if levels.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("trajectory levels must be finite"));
                }
            }
            TrajectoryConfig::Scripted { angles } => {
                if angles.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("scripted trajectory angles must be finite"));
                }
            }
        }
        Ok(())
    }
}

/// Target angle at frame `t`.
pub fn trajectory_at(config: &TrajectoryConfig, t: usize, frame_seconds: f64) -> Result<f64> {
    match config {
        TrajectoryConfig::Sinusoidal {
            amplitude,
            period_s,
            phase,
        } => Ok(amplitude * (2.0 * PI * t as f64 * frame_seconds / period_s + phase).sin()),
        TrajectoryConfig::PiecewiseConstant { levels, hold_steps } => {
            let i = (t / hold_steps).min(levels.len() - 1);
            Ok(levels[i])
        }
        TrajectoryConfig::Scripted { angles } => angles.get(t).copied().ok_or_else(|| {
            Error::invalid(format!(
                "frame {t} is beyond the scripted trajectory of {} angles",
                angles.len()
            ))
        }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetConfig {
    pub hr_bpm: f64,
    pub depth_m: f64,
    /// Std of the angular envelope (rad, amplitude domain).
    pub angular_sigma: f64,
    /// Std of the range envelope (m, amplitude domain).
    pub range_sigma: f64,
    /// Peak wall-motion phase excursion β (rad).
    pub mod_index: f64,
    /// Weight of the second harmonic in the wall-motion law.
    pub motion_asymmetry: f64,
    /// Peak echo amplitude of the moving target.
    pub amplitude: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            hr_bpm: 140.0,
            depth_m: 0.13,
            // Power envelope exp(-(Θ-x)²/σ²) matches the agent's hw = 2.5e-3.
            angular_sigma: 5.0e-3f64.sqrt(),
            range_sigma: 0.01,
            mod_index: 1.0,
            motion_asymmetry: 0.5,
            amplitude: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Power Doppler SNR in dB; `None` disables noise.
    pub snr_db: Option<f64>,
    /// Amplitude of the static background echo.
    pub clutter_amplitude: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            snr_db: Some(20.0),
            clutter_amplitude: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RangeGridConfig {
    pub min_m: f64,
    pub max_m: f64,
    pub count: usize,
}

impl Default for RangeGridConfig {
    fn default() -> Self {
        Self {
            min_m: 0.08,
            max_m: 0.18,
            count: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub trajectory: TrajectoryConfig,
    pub target: TargetConfig,
    pub noise: NoiseConfig,
    /// Transmit beam width `bw_env` (rad², amplitude domain).
    pub beam_variance: f64,
    /// Focused-transmit power gain over the unfocused SNR reference (dB).
    pub tx_focus_gain_db: f64,
    pub prf_hz: f64,
    pub ensemble_s: f64,
    pub range: RangeGridConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            trajectory: TrajectoryConfig::default(),
            target: TargetConfig::default(),
            noise: NoiseConfig::default(),
            // Squared, this is the agent's default bw = 1e-2.
            beam_variance: 2.0e-2,
            tx_focus_gain_db: 10.0,
            prf_hz: 1500.0,
            ensemble_s: 1.0,
            range: RangeGridConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn n_slow(&self) -> usize {
        (self.prf_hz * self.ensemble_s).round() as usize
    }

    /// Frame interval; acquisitions are back to back.
    pub fn frame_seconds(&self) -> f64 {
        self.ensemble_s
    }

    pub fn validate(&self) -> Result<()> {
        self.trajectory.validate()?;
        let t = &self.target;
        let positive = [
            ("target.hr_bpm", t.hr_bpm),
            ("target.angular_sigma", t.angular_sigma),
            ("target.range_sigma", t.range_sigma),
            ("beam_variance", self.beam_variance),
            ("prf_hz", self.prf_hz),
            ("ensemble_s", self.ensemble_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        let finite = [
            ("target.mod_index", t.mod_index),
            ("target.motion_asymmetry", t.motion_asymmetry),
            ("target.amplitude", t.amplitude),
            ("tx_focus_gain_db", self.tx_focus_gain_db),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(format!("{name} must be finite")));
            }
        }
        if !(self.noise.clutter_amplitude.is_finite() && self.noise.clutter_amplitude >= 0.0) {
            return Err(Error::config("noise.clutter_amplitude must be non-negative"));
        }
        if let Some(snr) = self.noise.snr_db {
            if snr.is_nan() || snr == f64::NEG_INFINITY {
                return Err(Error::config("noise.snr_db must be a number"));
            }
        }
        let r = &self.range;
        if r.count == 0 || !(r.max_m > r.min_m) || !r.min_m.is_finite() || !r.max_m.is_finite() {
            return Err(Error::config("range grid must have count > 0 and max > min"));
        }
        if !(t.depth_m >= r.min_m && t.depth_m <= r.max_m) {
            return Err(Error::config("target depth lies outside the range grid"));
        }
        if self.n_slow() < 2 {
            return Err(Error::config("ensemble must hold at least two slow-time samples"));
        }
        Ok(())
    }
}

/// How the transmit beam weights the target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transmit {
    /// Focused beam steered to the given angle.
    Steered(f64),
    /// Unit gain everywhere; the reference used to define SNR.
    Unit,
}

/// Maps measured profiles onto the unit-peak scale of the agent's model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileCalibration {
    /// Expected noise contribution to every profile entry.
    pub noise_floor: f64,
    /// Profile height of a target centred in a beam steered at it.
    pub unit_response: f64,
}

impl ProfileCalibration {
    pub fn apply(&self, profile: &[f64]) -> Vec<f64> {
        profile
            .iter()
            .map(|&p| (p - self.noise_floor) / self.unit_response)
            .collect()
    }
}

/// One synthesized frame.
#[derive(Clone, Debug)]
pub struct EnvStep {
    pub t: usize,
    pub x_gt: f64,
    pub ensemble: SlowTimeEnsemble,
}

/// Exclusive state of one scenario's world.
#[derive(Clone, Debug)]
pub struct Environment {
    config: EnvConfig,
    grid: AngleGrid,
    ranges: Vec<f64>,
    seed: u64,
    t: usize,
    noise_std: f64,
    clutter_phase: Vec<f64>,
    spare: Option<Vec<Complex64>>,
}

impl Environment {
    pub fn new(config: EnvConfig, grid: AngleGrid, seed: u64) -> Result<Self> {
        config.validate()?;
        let ranges = linspace(config.range.min_m, config.range.max_m, config.range.count)?;
        let noise_std = match config.noise.snr_db {
            Some(snr) => calibrate_noise(&config, snr)?,
            None => 0.0,
        };
        let mut phase_rng = keyed_stream(seed, &[tag::ENVIRONMENT, u64::MAX]);
        let clutter_phase = (0..grid.len() * ranges.len())
            .map(|_| phase_rng.random_range(0.0..2.0 * PI))
            .collect();
        Ok(Self {
            config,
            grid,
            ranges,
            seed,
            t: 0,
            noise_std,
            clutter_phase,
            spare: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn grid(&self) -> &AngleGrid {
        &self.grid
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    /// Index of the next frame to be synthesized.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn x_gt(&self, t: usize) -> Result<f64> {
        trajectory_at(&self.config.trajectory, t, self.config.frame_seconds())
    }

    /// Synthesizes frame `t` under `transmit` and moves the clock forward.
    pub fn step(&mut self, a: f64, parallel: bool) -> Result<EnvStep> {
        let t = self.t;
        let x_gt = self.x_gt(t)?;
        let buf = self.spare.take().unwrap_or_default();
        let ensemble = self.synthesize_into(t, Transmit::Steered(a), parallel, buf)?;
        self.t += 1;
        Ok(EnvStep { t, x_gt, ensemble })
    }

    /// Hands a used ensemble back so the next [`Environment::step`] can
    /// write into its buffer instead of allocating.
    pub fn recycle(&mut self, ensemble: SlowTimeEnsemble) {
        self.spare = Some(ensemble.into_samples());
    }

    /// Full ensemble of frame `t`. Does not advance the clock.
    pub fn synthesize(&self, t: usize, transmit: Transmit, parallel: bool) -> Result<SlowTimeEnsemble> {
        self.synthesize_into(t, transmit, parallel, Vec::new())
    }

    fn synthesize_into(
        &self,
        t: usize,
        transmit: Transmit,
        parallel: bool,
        mut samples: Vec<Complex64>,
    ) -> Result<SlowTimeEnsemble> {
        if let Transmit::Steered(a) = transmit {
            if !a.is_finite() {
                return Err(Error::invalid("steering angle must be finite"));
            }
        }
        let x_gt = self.x_gt(t)?;
        let phasor = self.wall_phasor(t);
        let n_slow = phasor.len();
        let n_r = self.ranges.len();
        // Every sample is overwritten below.
        samples.resize(self.grid.len() * n_r * n_slow, Complex64::new(0.0, 0.0));
        let fill = |(p, px): (usize, &mut [Complex64])| {
            self.fill_pixel(t, p / n_r, p % n_r, x_gt, transmit, &phasor, px);
        };
        if parallel {
            samples.par_chunks_mut(n_slow).enumerate().for_each(fill);
        } else {
            samples.chunks_mut(n_slow).enumerate().for_each(fill);
        }
        Ok(SlowTimeEnsemble::from_parts_unchecked(
            samples,
            self.grid.len(),
            n_r,
            n_slow,
            self.config.prf_hz,
        ))
    }

    /// Slow-time signal of a single pixel; identical to the same pixel of
    /// [`Environment::synthesize`].
    pub fn synthesize_pixel(&self, t: usize, transmit: Transmit, j: usize, k: usize) -> Result<Vec<Complex64>> {
        if j >= self.grid.len() || k >= self.ranges.len() {
            return Err(Error::invalid(format!("pixel ({j}, {k}) is outside the grid")));
        }
        let x_gt = self.x_gt(t)?;
        let phasor = self.wall_phasor(t);
        let mut px = vec![Complex64::new(0.0, 0.0); phasor.len()];
        self.fill_pixel(t, j, k, x_gt, transmit, &phasor, &mut px);
        Ok(px)
    }

    /// `exp(iφ(n))` for the samples of frame `t`; the phase runs continuously
    /// across frames.
    fn wall_phasor(&self, t: usize) -> Vec<Complex64> {
        let n_slow = self.config.n_slow();
        let target = &self.config.target;
        let f = target.hr_bpm / 60.0;
        let prf = self.config.prf_hz;
        (0..n_slow)
            .map(|n| {
                let m = (t * n_slow + n) as f64;
                let w = 2.0 * PI * f * m / prf;
                let phi = target.mod_index * (w.sin() + target.motion_asymmetry * (2.0 * w).sin());
                Complex64::from_polar(1.0, phi)
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn fill_pixel(
        &self,
        t: usize,
        j: usize,
        k: usize,
        x_gt: f64,
        transmit: Transmit,
        phasor: &[Complex64],
        out: &mut [Complex64],
    ) {
        let cfg = &self.config;
        let theta = self.grid.angles()[j];
        let tx = match transmit {
            Transmit::Steered(a) => {
                let focus = 10f64.powf(cfg.tx_focus_gain_db / 20.0);
                focus * (-(theta - a) * (theta - a) / (2.0 * cfg.beam_variance)).exp()
            }
            Transmit::Unit => 1.0,
        };
        let tgt = &cfg.target;
        let dr = self.ranges[k] - tgt.depth_m;
        let envelope = tgt.amplitude
            * (-(theta - x_gt) * (theta - x_gt) / (2.0 * tgt.angular_sigma * tgt.angular_sigma)).exp()
            * (-dr * dr / (2.0 * tgt.range_sigma * tgt.range_sigma)).exp();
        let amp = tx * envelope;
        let clutter = Complex64::from_polar(
            cfg.noise.clutter_amplitude,
            self.clutter_phase[j * self.ranges.len() + k],
        );

        for (o, p) in out.iter_mut().zip(phasor) {
            *o = p * amp + clutter;
        }
        if self.noise_std > 0.0 {
            let s = self.noise_std / std::f64::consts::SQRT_2;
            let mut rng = keyed_stream(self.seed, &[tag::ENVIRONMENT, t as u64, j as u64, k as u64]);
            for o in out.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *o += Complex64::new(re * s, im * s);
            }
        }
    }

    /// Scale and floor that map the depth-integrated profile onto `f_y`.
    pub fn profile_calibration(&self) -> ProfileCalibration {
        let cfg = &self.config;
        let n = cfg.n_slow() as f64;
        let tgt = &cfg.target;
        let range_power = self
            .ranges
            .iter()
            .map(|r| {
                let d = r - tgt.depth_m;
                (-d * d / (tgt.range_sigma * tgt.range_sigma)).exp()
            })
            .sum::<f64>()
            / self.ranges.len() as f64;
        ProfileCalibration {
            noise_floor: self.noise_std * self.noise_std * (1.0 - 1.0 / n),
            unit_response: 10f64.powf(cfg.tx_focus_gain_db / 10.0)
                * target_signal_power(tgt)
                * range_power,
        }
    }
}

/// Mean of `exp(iφ)` over one cardiac period, by uniform sampling of the
/// phase law (exact for its trigonometric terms).
pub fn wall_phasor_mean(target: &TargetConfig) -> Complex64 {
    const POINTS: usize = 4096;
    (0..POINTS)
        .map(|i| {
            let w = 2.0 * PI * i as f64 / POINTS as f64;
            Complex64::from_polar(
                1.0,
                target.mod_index * (w.sin() + target.motion_asymmetry * (2.0 * w).sin()),
            )
        })
        .sum::<Complex64>()
        / POINTS as f64
}

/// Clutter-filtered power of the target-centre pixel under unit transmit
/// gain: `A² (1 - |E e^{iφ}|²)`.
pub fn target_signal_power(target: &TargetConfig) -> f64 {
    target.amplitude * target.amplitude * (1.0 - wall_phasor_mean(target).norm_sqr())
}

/// Noise std `σ_w` giving the requested power Doppler SNR at the target
/// centre, where noise power after mean removal is `σ_w² (1 - 1/n_slow)`.
pub fn calibrate_noise(config: &EnvConfig, snr_db: f64) -> Result<f64> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::invalid(format!("snr_db must be a number, got {snr_db}")));
    }
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    let n = config.n_slow() as f64;
    let p_sig = target_signal_power(&config.target);
    let p_noise = p_sig / 10f64.powf(snr_db / 10.0);
    Ok((p_noise / (1.0 - 1.0 / n)).sqrt())
}

/// Power Doppler SNR measured over `frames` frames: target-centre pixel
/// under unit transmit gain against the pixel in the same range row that is
/// farthest from the target.
pub fn measure_snr(env: &Environment, frames: usize) -> Result<f64> {
    if frames == 0 {
        return Err(Error::invalid("need at least one frame"));
    }
    let depth = env.config.target.depth_m;
    let k = env
        .ranges
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - depth).abs().total_cmp(&(b.1 - depth).abs()))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let mut sig = 0.0;
    let mut noise = 0.0;
    for t in 0..frames {
        let x = env.x_gt(t)?;
        let (j, _) = env.grid.nearest(x);
        let far = if (x - env.grid.min()).abs() > (x - env.grid.max()).abs() { 0 } else { env.grid.len() - 1 };
        for (col, acc) in [(j, &mut sig), (far, &mut noise)] {
            let px = env.synthesize_pixel(t, Transmit::Unit, col, k)?;
            let ens = SlowTimeEnsemble::from_signal(px, env.config.prf_hz)?;
            let filtered = doppler::clutter_filter_with(&ens, ClutterOrder::Mean);
            *acc += doppler::power_doppler(&filtered, 0.0, false).at(0, 0);
        }
    }
    let p_noise = noise / frames as f64;
    let p_sig = sig / frames as f64 - p_noise;
    if !(p_noise > 0.0 && p_sig > 0.0) {
        return Err(Error::Numerical("SNR measurement has no noise or no signal".into()));
    }
    Ok(10.0 * (p_sig / p_noise).log10())
}
