//! Doppler processing: clutter filtering, power Doppler, range search and
//! heart-rate estimation from one slow-time signal.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::AngleGrid;
use crate::{Error, Result};

/// Complex slow-time samples on the polar grid for one transmit event.
///
/// Samples are stored pixel-major: the `n_slow` samples of pixel `(j, k)`
/// are contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct SlowTimeEnsemble {
    samples: Vec<Complex64>,
    n_angles: usize,
    n_ranges: usize,
    n_slow: usize,
    prf: f64,
}

impl SlowTimeEnsemble {
    pub fn new(
        samples: Vec<Complex64>,
        n_angles: usize,
        n_ranges: usize,
        n_slow: usize,
        prf: f64,
    ) -> Result<Self> {
        if n_angles == 0 || n_ranges == 0 || n_slow == 0 {
            return Err(Error::invalid("ensemble dimensions must be positive"));
        }
        let expected = n_angles * n_ranges * n_slow;
        if samples.len() != expected {
            return Err(Error::Shape {
                expected,
                actual: samples.len(),
            });
        }
        if !(prf > 0.0 && prf.is_finite()) {
            return Err(Error::invalid("prf must be positive"));
        }
        if samples.iter().any(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(Error::invalid("ensemble contains non-finite samples"));
        }
        Ok(Self {
            samples,
            n_angles,
            n_ranges,
            n_slow,
            prf,
        })
    }

    /// Single-pixel ensemble holding one slow-time signal.
    pub fn from_signal(signal: Vec<Complex64>, prf: f64) -> Result<Self> {
        let n = signal.len();
        Self::new(signal, 1, 1, n, prf)
    }

    pub(crate) fn from_parts_unchecked(
        samples: Vec<Complex64>,
        n_angles: usize,
        n_ranges: usize,
        n_slow: usize,
        prf: f64,
    ) -> Self {
        debug_assert_eq!(samples.len(), n_angles * n_ranges * n_slow);
        Self {
            samples,
            n_angles,
            n_ranges,
            n_slow,
            prf,
        }
    }

    /// Gives back the sample buffer, e.g. for reuse.
    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn n_ranges(&self) -> usize {
        self.n_ranges
    }

    pub fn n_slow(&self) -> usize {
        self.n_slow
    }

    pub fn prf(&self) -> f64 {
        self.prf
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    /// Slow-time signal at angle index `j`, range index `k`.
    pub fn pixel(&self, j: usize, k: usize) -> &[Complex64] {
        let start = (j * self.n_ranges + k) * self.n_slow;
        &self.samples[start..start + self.n_slow]
    }

    pub fn pixel_mut(&mut self, j: usize, k: usize) -> &mut [Complex64] {
        let start = (j * self.n_ranges + k) * self.n_slow;
        &mut self.samples[start..start + self.n_slow]
    }
}

/// Order of the polynomial regression clutter filter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClutterOrder {
    /// Per-pixel mean removal.
    #[default]
    Mean,
    /// Per-pixel removal of the least-squares line.
    Linear,
}

/// Clutter-filtered power Doppler image and its depth-integrated profile.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerDopplerFrame {
    /// Row-major `n_angles x n_ranges`.
    image: Vec<f64>,
    n_angles: usize,
    n_ranges: usize,
    profile: Vec<f64>,
    pub action: f64,
}

impl PowerDopplerFrame {
    pub fn new(image: Vec<f64>, n_angles: usize, n_ranges: usize, action: f64) -> Result<Self> {
        if image.len() != n_angles * n_ranges || n_angles == 0 || n_ranges == 0 {
            return Err(Error::Shape {
                expected: n_angles * n_ranges,
                actual: image.len(),
            });
        }
        if image.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("power Doppler values must be finite and non-negative"));
        }
        let profile = depth_means(&image, n_ranges);
        Ok(Self {
            image,
            n_angles,
            n_ranges,
            profile,
            action,
        })
    }

    pub fn image(&self) -> &[f64] {
        &self.image
    }

    pub fn at(&self, j: usize, k: usize) -> f64 {
        self.image[j * self.n_ranges + k]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.image[j * self.n_ranges..(j + 1) * self.n_ranges]
    }

    /// Depth-integrated (mean over range) profile, one value per angle.
    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn n_ranges(&self) -> usize {
        self.n_ranges
    }
}

fn depth_means(image: &[f64], n_ranges: usize) -> Vec<f64> {
    image
        .chunks(n_ranges)
        .map(|c| c.iter().sum::<f64>() / n_ranges as f64)
        .collect()
}

fn filter_pixel(s: &mut [Complex64], order: ClutterOrder) {
    let n = s.len();
    if n == 0 {
        return;
    }
    let mean = s.iter().sum::<Complex64>() / n as f64;
    match order {
        ClutterOrder::Mean => s.iter_mut().for_each(|v| *v -= mean),
        ClutterOrder::Linear => {
            let centre = (n as f64 - 1.0) / 2.0;
            let denom: f64 = (0..n).map(|i| (i as f64 - centre).powi(2)).sum();
            let slope = if denom > 0.0 {
                s.iter()
                    .enumerate()
                    .map(|(i, v)| v * (i as f64 - centre))
                    .sum::<Complex64>()
                    / denom
            } else {
                Complex64::new(0.0, 0.0)
            };
            s.iter_mut()
                .enumerate()
                .for_each(|(i, v)| *v -= mean + slope * (i as f64 - centre));
        }
    }
}

/// In-place clutter filter over every pixel.
pub fn clutter_filter_in_place(ensemble: &mut SlowTimeEnsemble, order: ClutterOrder, parallel: bool) {
    let n = ensemble.n_slow;
    if parallel {
        ensemble
            .samples
            .par_chunks_mut(n)
            .for_each(|px| filter_pixel(px, order));
    } else {
        ensemble
            .samples
            .chunks_mut(n)
            .for_each(|px| filter_pixel(px, order));
    }
}

/// Removes the slow-time mean of every pixel.
pub fn clutter_filter(ensemble: &SlowTimeEnsemble) -> SlowTimeEnsemble {
    clutter_filter_with(ensemble, ClutterOrder::Mean)
}

pub fn clutter_filter_with(ensemble: &SlowTimeEnsemble, order: ClutterOrder) -> SlowTimeEnsemble {
    let mut out = ensemble.clone();
    clutter_filter_in_place(&mut out, order, false);
    out
}

/// Mean slow-time power per pixel, plus its mean over depth.
pub fn power_doppler(filtered: &SlowTimeEnsemble, action: f64, parallel: bool) -> PowerDopplerFrame {
    let n = filtered.n_slow;
    let power = |px: &[Complex64]| px.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
    let image: Vec<f64> = if parallel {
        filtered.samples.par_chunks(n).map(power).collect()
    } else {
        filtered.samples.chunks(n).map(power).collect()
    };
    let profile = depth_means(&image, filtered.n_ranges);
    PowerDopplerFrame {
        image,
        n_angles: filtered.n_angles,
        n_ranges: filtered.n_ranges,
        profile,
        action,
    }
}

/// Pixel picked for heart-rate read-out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RangeLocation {
    pub r_star: usize,
    pub column: usize,
    /// The requested angle fell outside the grid and was clamped.
    pub clamped: bool,
}

/// Column nearest `x_star`, then the range bin with the most power in it.
pub fn locate_range(frame: &PowerDopplerFrame, x_star: f64, grid: &AngleGrid) -> Result<RangeLocation> {
    if grid.len() != frame.n_angles {
        return Err(Error::Shape {
            expected: frame.n_angles,
            actual: grid.len(),
        });
    }
    if !x_star.is_finite() {
        return Err(Error::invalid("x_star must be finite"));
    }
    let (column, clamped) = grid.nearest(x_star);
    let col = frame.column(column);
    let mut r_star = 0;
    for (k, &v) in col.iter().enumerate() {
        if v > col[r_star] {
            r_star = k;
        }
    }
    Ok(RangeLocation {
        r_star,
        column,
        clamped,
    })
}

/// Heart-rate search settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HrSettings {
    /// Search band `[low, high]` in beats per minute.
    pub band_bpm: [f64; 2],
    /// Minimum normalized autocorrelation peak for an estimate to be reported.
    pub min_confidence: f64,
    /// Length of the moving average applied to the envelope, in seconds.
    pub smoothing_s: f64,
}

impl Default for HrSettings {
    fn default() -> Self {
        Self {
            band_bpm: [90.0, 200.0],
            min_confidence: 0.3,
            smoothing_s: 0.03,
        }
    }
}

impl HrSettings {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.band_bpm;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::invalid(format!("invalid heart-rate band [{lo}, {hi}]")));
        }
        if !self.min_confidence.is_finite() {
            return Err(Error::invalid("min_confidence must be finite"));
        }
        if !(self.smoothing_s >= 0.0 && self.smoothing_s.is_finite()) {
            return Err(Error::invalid("smoothing_s must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HrEstimate {
    pub bpm: Option<f64>,
    /// Lag of the autocorrelation peak, in seconds.
    pub peak_lag: f64,
    /// Normalized autocorrelation at the detected peak.
    pub confidence: f64,
}

/// Autocorrelation heart-rate estimate from a complex slow-time signal.
///
/// 1. Remove the slow-time mean and take the magnitude envelope.
/// 2. Smooth the envelope with a moving average and remove its mean.
/// 3. Find the lag in the search band with the largest biased normalized
///    autocorrelation `ρ[ℓ] = Σ e[n] e[n+ℓ] / Σ e[n]²`; this is the
///    detection statistic.
/// 4. Refine the lag to the maximum of the overlap-normalized correlation
///    `Σ e[n] e[n+ℓ] / sqrt(Σ e[n]² · Σ e[n+ℓ]²)` (sums over the overlap)
///    within ±10 % of the detected lag. The biased estimator leans toward
///    short lags; this one reaches exactly 1 at a whole-sample period.
/// 5. Report `60 · prf / lag` if `ρ` at the detected peak reaches
///    `min_confidence`.
pub fn estimate_hr(signal: &[Complex64], prf: f64, settings: &HrSettings) -> Result<HrEstimate> {
    settings.validate()?;
    if !(prf > 0.0 && prf.is_finite()) {
        return Err(Error::invalid("prf must be positive"));
    }
    let [bpm_lo, bpm_hi] = settings.band_bpm;
    let needed = (prf * 60.0 / bpm_lo).ceil() as usize;
    if signal.len() < needed {
        return Err(Error::invalid(format!(
            "signal of {} samples is shorter than one period at {bpm_lo} bpm ({needed} samples)",
            signal.len()
        )));
    }

    let mut filtered = signal.to_vec();
    filter_pixel(&mut filtered, ClutterOrder::Mean);
    let envelope: Vec<f64> = filtered.iter().map(|v| v.norm()).collect();
    let width = ((settings.smoothing_s * prf).round() as usize).clamp(1, envelope.len());
    let mut e = moving_average(&envelope, width);
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    e.iter_mut().for_each(|v| *v -= mean);

    let len = e.len();
    let lag_lo = ((prf * 60.0 / bpm_hi).ceil() as usize).max(1);
    let lag_hi = ((prf * 60.0 / bpm_lo).floor() as usize).min(len - 1);
    if lag_lo > lag_hi {
        return Err(Error::invalid("search band yields an empty lag range"));
    }
    let energy: f64 = e.iter().map(|v| v * v).sum();
    if !(energy > 0.0) {
        return Ok(HrEstimate {
            bpm: None,
            peak_lag: lag_lo as f64 / prf,
            confidence: 0.0,
        });
    }
    let acf: Vec<f64> = (lag_lo..=lag_hi)
        .map(|lag| e[..len - lag].iter().zip(&e[lag..]).map(|(a, b)| a * b).sum())
        .collect();

    let mut coarse = 0;
    for (i, &v) in acf.iter().enumerate() {
        if v > acf[coarse] {
            coarse = i;
        }
    }
    let confidence = acf[coarse] / energy;

    let coarse_lag = lag_lo + coarse;
    let reach = coarse_lag / 10;
    let from = coarse_lag.saturating_sub(reach).max(lag_lo);
    let to = (coarse_lag + reach).min(lag_hi);
    // Prefix energies for the overlap-normalized correlation.
    let mut cum = Vec::with_capacity(len + 1);
    cum.push(0.0);
    for v in &e {
        cum.push(cum[cum.len() - 1] + v * v);
    }
    let mut best_lag = coarse_lag;
    let mut best = f64::NEG_INFINITY;
    for lag in from..=to {
        let head = cum[len - lag];
        let tail = cum[len] - cum[lag];
        let v = acf[lag - lag_lo] / (head * tail).sqrt().max(f64::MIN_POSITIVE);
        if v > best {
            best = v;
            best_lag = lag;
        }
    }

    Ok(HrEstimate {
        bpm: (confidence >= settings.min_confidence).then(|| 60.0 * prf / best_lag as f64),
        peak_lag: best_lag as f64 / prf,
        confidence,
    })
}

/// Moving average over full windows only (`len - width + 1` outputs).
fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    if width <= 1 {
        return x.to_vec();
    }
    let mut out = Vec::with_capacity(x.len() + 1 - width);
    let mut acc: f64 = x[..width].iter().sum();
    out.push(acc / width as f64);
    for i in width..x.len() {
        acc += x[i] - x[i - width];
        out.push(acc / width as f64);
    }
    out
}
