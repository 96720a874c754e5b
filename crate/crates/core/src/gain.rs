//! Gain algebra linking the target-to-interference ratio θ (dB) to the two
//! source gains.
//!
//! With equal-power sources of nominal RMS `G0` and an observation of RMS
//! `g_y`, the gains satisfy `g_x² + g_v² = (g_y / G0)²` and
//! `θ = 10·log10(g_x² / g_v²)`. Solving both gives `log10 g_x = g(θ)` and
//! `log10 g_v = g(−θ)` with
//! `g(θ) = log10[(g_y / G0)·(1 + 10^(−θ/10))^(−1/2)]`.

use std::f64::consts::{LN_10, SQRT_2};

use crate::signal::AudioSignal;
use crate::{Error, Result};

pub const DEFAULT_THETA_MIN: f64 = -15.0;
pub const DEFAULT_THETA_MAX: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainContext {
    /// RMS of the observation.
    pub gy: f64,
    /// Nominal RMS of a source before gain scaling.
    pub g0: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl GainContext {
    pub fn new(gy: f64, g0: f64) -> Result<Self> {
        Self::with_interval(gy, g0, DEFAULT_THETA_MIN, DEFAULT_THETA_MAX)
    }

    pub fn with_interval(gy: f64, g0: f64, theta_min: f64, theta_max: f64) -> Result<Self> {
        if !(gy > 0.0 && gy.is_finite()) {
            return Err(Error::InvalidConfig(format!("g_y must be positive, got {gy}")));
        }
        if !(g0 > 0.0 && g0.is_finite()) {
            return Err(Error::InvalidConfig(format!("G0 must be positive, got {g0}")));
        }
        if !(theta_min < theta_max) {
            return Err(Error::InvalidConfig(format!(
                "empty θ interval [{theta_min}, {theta_max}]"
            )));
        }
        Ok(Self {
            gy,
            g0,
            theta_min,
            theta_max,
        })
    }

    /// Gain convention of the non-adapted baselines: `g_y / G0 = √2`, so that
    /// θ = 0 gives unit gains for both sources.
    pub fn unit_gains(g0: f64) -> Result<Self> {
        Self::new(SQRT_2 * g0, g0)
    }

    pub fn ratio(&self) -> f64 {
        self.gy / self.g0
    }

    pub fn clamp(&self, theta: f64) -> f64 {
        theta.clamp(self.theta_min, self.theta_max)
    }
}

/// log10 gains of the target and interference for one θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainPair {
    pub log10_gx: f64,
    pub log10_gv: f64,
}

impl GainPair {
    pub fn gx(&self) -> f64 {
        10f64.powf(self.log10_gx)
    }

    pub fn gv(&self) -> f64 {
        10f64.powf(self.log10_gv)
    }

    /// The pair seen from the other source's side.
    pub fn swapped(&self) -> GainPair {
        GainPair {
            log10_gx: self.log10_gv,
            log10_gv: self.log10_gx,
        }
    }
}

/// `g(θ) = log10(g_y/G0) − ½·log10(1 + 10^(−θ/10))`.
pub fn g_of_theta(theta: f64, ctx: &GainContext) -> f64 {
    let a = 10f64.powf(-theta / 10.0);
    ctx.ratio().log10() - 0.5 * a.ln_1p() / LN_10
}

pub fn gains_from_theta(theta: f64, ctx: &GainContext) -> GainPair {
    GainPair {
        log10_gx: g_of_theta(theta, ctx),
        log10_gv: g_of_theta(-theta, ctx),
    }
}

fn mean_power(samples: &[f64]) -> f64 {
    samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64
}

/// Observation RMS, `g_y = sqrt(mean(Y²))`.
pub fn estimate_gy(signal: &AudioSignal) -> Result<f64> {
    if signal.is_empty() {
        return Err(Error::EmptyInput);
    }
    let p = mean_power(&signal.samples);
    if p == 0.0 {
        return Err(Error::Silent);
    }
    Ok(p.sqrt())
}

/// Nominal source RMS: square root of the mean of per-signal mean powers.
/// Unit-RMS training material gives exactly 1.
pub fn estimate_g0(training: &[AudioSignal]) -> Result<f64> {
    if training.is_empty() || training.iter().any(AudioSignal::is_empty) {
        return Err(Error::EmptyInput);
    }
    let mean = training.iter().map(|s| mean_power(&s.samples)).sum::<f64>() / training.len() as f64;
    if mean == 0.0 {
        return Err(Error::Silent);
    }
    Ok(mean.sqrt())
}

/// Rescales a signal to unit RMS.
pub fn normalize_rms(signal: &AudioSignal) -> Result<AudioSignal> {
    let rms = estimate_gy(signal)?;
    Ok(signal.scaled(1.0 / rms))
}
