//! Synthetic sources standing in for recorded speech.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::gain::normalize_rms;
use crate::models::{DiagGaussian, HmmModel};
use crate::signal::{hann, AudioSignal, FramingConfig, ENVELOPE_FLOOR};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Log spectra sampled from an HMM, rendered with random phase and
    /// overlap-add.
    HmmSample,
    /// Harmonic tone with a voice-specific fundamental.
    Tonal,
    /// White noise through a voice-specific resonator.
    FilteredNoise,
}

impl SynthKind {
    pub fn name(self) -> &'static str {
        match self {
            SynthKind::HmmSample => "hmm_sample",
            SynthKind::Tonal => "tonal",
            SynthKind::FilteredNoise => "filtered_noise",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SynthKind::HmmSample, SynthKind::Tonal, SynthKind::FilteredNoise]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown synth kind {s:?}")))
    }
}

/// Fundamental of the tonal voices, as a DFT bin index.
const TONAL_F0_BINS: [usize; 6] = [4, 7, 5, 9, 6, 11];

/// Renders `duration` seconds of a synthetic source, scaled to unit RMS.
/// `voice` selects the tonal fundamental or the noise resonance and is
/// ignored by [`SynthKind::HmmSample`].
pub fn synth_source(
    kind: SynthKind,
    model: Option<&HmmModel>,
    voice: u32,
    seed: u64,
    duration: f64,
    cfg: &FramingConfig,
) -> Result<AudioSignal> {
    cfg.validate()?;
    let n = (duration * cfg.sample_rate as f64).round();
    if !(n >= 1.0) {
        return Err(Error::InvalidConfig(format!("duration {duration} s gives no samples")));
    }
    let n = n as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = cfg.sample_rate as f64;
    let samples = match kind {
        SynthKind::HmmSample => {
            let model = model.ok_or_else(|| Error::InvalidConfig("hmm_sample synthesis needs an HMM model".into()))?;
            if model.dim() != cfg.n_bins() {
                return Err(Error::ModelMismatch(format!(
                    "model dimension {} does not match {} spectral bins",
                    model.dim(),
                    cfg.n_bins()
                )));
            }
            render_hmm(model, &mut rng, n, cfg)
        }
        SynthKind::Tonal => {
            let f0 = TONAL_F0_BINS[voice as usize % TONAL_F0_BINS.len()] as f64 * fs / cfg.dft_size as f64;
            let n_harm = ((0.5 * fs / f0).floor() as usize).saturating_sub(1).max(1);
            let phases: Vec<f64> = (0..n_harm).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let rate = 3.0 + voice as f64 % 4.0;
            (0..n)
                .map(|t| {
                    let time = t as f64 / fs;
                    let env = 0.6 + 0.4 * (2.0 * PI * rate * time).sin();
                    let tone: f64 = phases
                        .iter()
                        .enumerate()
                        .map(|(h, ph)| (2.0 * PI * f0 * (h + 1) as f64 * time + ph).sin() / (h + 1) as f64)
                        .sum();
                    env * tone
                })
                .collect()
        }
        SynthKind::FilteredNoise => {
            let fc = 300.0 + 600.0 * (voice % 6) as f64;
            let r = (-PI * 150.0 / fs).exp();
            let c1 = 2.0 * r * (2.0 * PI * fc / fs).cos();
            let c2 = -r * r;
            let (mut y1, mut y2) = (0.0, 0.0);
            (0..n)
                .map(|_| {
                    let x: f64 = StandardNormal.sample(&mut rng);
                    let y = x + c1 * y1 + c2 * y2;
                    y2 = y1;
                    y1 = y;
                    y
                })
                .collect()
        }
    };
    normalize_rms(&AudioSignal::new(samples, cfg.sample_rate))
}

fn render_hmm(model: &HmmModel, rng: &mut ChaCha8Rng, n: usize, cfg: &FramingConfig) -> Vec<f64> {
    let d = cfg.dft_size;
    let half = d / 2;
    let flen = cfg.frame_len;
    let frames = if n <= flen { 1 } else { (n - flen).div_ceil(cfg.hop) + 1 };
    let (_, spectra) = model.sample(rng, frames);
    let ifft = FftPlanner::new().plan_fft_inverse(d);
    let window = hann(flen);
    let total = (frames - 1) * cfg.hop + flen;
    let mut out = vec![0.0; total];
    let mut env = vec![0.0; total];
    let mut buf = vec![Complex64::new(0.0, 0.0); d];
    for (r, logmag) in spectra.iter().enumerate() {
        for k in 0..=half {
            let mag = 10f64.powf(logmag[k]);
            buf[k] = if k == 0 || k == half {
                Complex64::new(if rng.random::<bool>() { mag } else { -mag }, 0.0)
            } else {
                Complex64::from_polar(mag, rng.random_range(0.0..2.0 * PI))
            };
        }
        for k in half + 1..d {
            buf[k] = buf[d - k].conj();
        }
        ifft.process(&mut buf);
        let start = r * cfg.hop;
        for t in 0..flen {
            out[start + t] += buf[t].re / d as f64 * window[t];
            env[start + t] += window[t];
        }
    }
    out.iter()
        .zip(&env)
        .take(n)
        .map(|(o, e)| o / e.max(ENVELOPE_FLOOR))
        .collect()
}

/// States of each [`speaker_generator`] model.
pub const GENERATOR_STATES: usize = 8;

/// A fixed synthetic "speaker": an HMM over log spectra whose states carry
/// three formant-like peaks, a spectral tilt and, for voiced states, a
/// harmonic ripple at a voice-specific fundamental. Transitions are sticky.
/// Different voices share the frequency range, so their spectra overlap.
pub fn speaker_generator(voice: u32, cfg: &FramingConfig) -> Result<HmmModel> {
    cfg.validate()?;
    let k = GENERATOR_STATES;
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9 ^ (voice as u64).wrapping_mul(0x1000_0001));
    let fs = cfg.sample_rate as f64;
    let nyq = 0.5 * fs;
    let f0 = [110.0, 205.0, 150.0, 260.0, 130.0, 180.0][voice as usize % 6];
    let stretch = 1.0 + 0.08 * (voice % 5) as f64;
    let states = (0..k)
        .map(|j| {
            let formants = [
                (
                    rng.random_range(300.0..850.0) * stretch,
                    rng.random_range(80.0..140.0),
                    1.2,
                ),
                (
                    rng.random_range(900.0..2300.0) * stretch,
                    rng.random_range(100.0..180.0),
                    0.9,
                ),
                (
                    rng.random_range(2400.0..3400.0f64).min(0.95 * nyq),
                    rng.random_range(150.0..250.0),
                    0.6,
                ),
            ];
            let level = rng.random_range(-0.3..0.3);
            let voiced = j + 2 < k;
            let mean = (0..cfg.n_bins())
                .map(|bin| {
                    let f = bin as f64 * fs / cfg.dft_size as f64;
                    let peaks: f64 = formants
                        .iter()
                        .map(|(fc, bw, a)| a * (-0.5 * ((f - fc) / bw).powi(2)).exp())
                        .sum();
                    let ripple = if voiced { 0.35 * (2.0 * PI * f / f0).cos() } else { 0.0 };
                    1.0 + level + peaks + ripple - 0.15 * f / 1000.0
                })
                .collect();
            DiagGaussian::new(mean, vec![0.01; cfg.n_bins()])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut trans = vec![0.15 / (k - 1) as f64; k * k];
    for i in 0..k {
        trans[i * k + i] = 0.85;
    }
    HmmModel::from_probs(&vec![1.0 / k as f64; k], &trans, states)
}
