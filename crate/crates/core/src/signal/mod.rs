//! Framing, log-spectral analysis and masked overlap-add synthesis.
//!
//! Frame `r` (zero-based) covers samples `[r * hop, r * hop + frame_len)`.
//! Analysis uses a Hamming window and a `dft_size`-point DFT; only bins
//! `0..=dft_size / 2` are kept, the upper half being implied by conjugate
//! symmetry. Synthesis multiplies each inverse-DFT frame by a Hann window and
//! divides the overlap-added result by the accumulated analysis × synthesis
//! window envelope.

mod wav;

use std::ops::Deref;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use wav::{read_wav, write_wav};

pub const DEFAULT_SAMPLE_RATE: u32 = 8000;

/// Magnitudes below this are clamped before taking log10.
pub const DEFAULT_LOG_FLOOR: f64 = 1e-10;

/// Floor applied to the overlap-add envelope before normalization.
pub const ENVELOPE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn scaled(&self, factor: f64) -> AudioSignal {
        AudioSignal::new(self.samples.iter().map(|s| s * factor).collect(), self.sample_rate)
    }
}

/// Short-time analysis parameters. Defaults: 32 ms frames with a 10 ms hop at
/// 8 kHz and a 256-point DFT, giving 129 log-spectral bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FramingConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub dft_size: usize,
    pub log_floor: f64,
}

impl Default for FramingConfig {
    fn default() -> Self {
        Self {
            sample_rate: DEFAULT_SAMPLE_RATE,
            frame_len: 256,
            hop: 80,
            dft_size: 256,
            log_floor: DEFAULT_LOG_FLOOR,
        }
    }
}

impl FramingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::InvalidConfig("sample_rate must be positive".into()));
        }
        if !(0 < self.hop && self.hop <= self.frame_len && self.frame_len <= self.dft_size) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < hop ({}) <= frame_len ({}) <= dft_size ({})",
                self.hop, self.frame_len, self.dft_size
            )));
        }
        if !self.dft_size.is_multiple_of(2) {
            return Err(Error::InvalidConfig("dft_size must be even".into()));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return Err(Error::InvalidConfig("log_floor must be positive".into()));
        }
        Ok(())
    }

    /// Number of stored spectral bins, `dft_size / 2 + 1`.
    pub fn n_bins(&self) -> usize {
        self.dft_size / 2 + 1
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len <= self.frame_len {
            1
        } else {
            (len - self.frame_len) / self.hop + 1
        }
    }

    /// Frames per mega-frame of `seconds` duration.
    pub fn frames_per(&self, seconds: f64) -> usize {
        ((seconds * self.sample_rate as f64) / self.hop as f64).round().max(1.0) as usize
    }
}

/// One frame's log10-magnitude spectrum over bins `0..=D/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSpectralFrame {
    pub values: Vec<f64>,
}

impl LogSpectralFrame {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

impl Deref for LogSpectralFrame {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl AsRef<[f64]> for LogSpectralFrame {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

impl From<Vec<f64>> for LogSpectralFrame {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

/// Per-bin {0,1} filter over bins `0..=D/2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub values: Vec<bool>,
}

impl BinaryMask {
    pub fn new(values: Vec<bool>) -> Self {
        Self { values }
    }

    pub fn ones(n: usize) -> Self {
        Self { values: vec![true; n] }
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![false; n] }
    }

    pub fn complement(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| !v).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, d: usize) -> f64 {
        if self.values[d] {
            1.0
        } else {
            0.0
        }
    }
}

/// Symmetric Hamming window.
pub fn hamming(n: usize) -> Vec<f64> {
    cosine_window(n, 0.54, 0.46)
}

/// Symmetric Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    cosine_window(n, 0.5, 0.5)
}

fn cosine_window(n: usize, a0: f64, a1: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| a0 - a1 * (2.0 * std::f64::consts::PI * i as f64 / denom).cos())
        .collect()
}

/// Splits a signal into overlapping frames. Signals shorter than one frame
/// are zero-padded to a single frame.
pub fn frame_signal(signal: &AudioSignal, cfg: &FramingConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if signal.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = cfg.frame_count(signal.len());
    let frames = (0..n)
        .map(|r| {
            let start = r * cfg.hop;
            let mut frame = vec![0.0; cfg.frame_len];
            let end = (start + cfg.frame_len).min(signal.len());
            frame[..end - start].copy_from_slice(&signal.samples[start..end]);
            frame
        })
        .collect();
    Ok(frames)
}

/// Log10-magnitude spectrum of one frame. Builds a one-off [`Stft`]; reuse an
/// [`Stft`] when analysing many frames.
pub fn log_spectrum(frame: &[f64], cfg: &FramingConfig) -> Result<LogSpectralFrame> {
    Stft::new(*cfg)?.log_spectrum(frame)
}

/// Applies complementary-or-not per-frame masks to the mixture and rebuilds
/// both sources by overlap-add. See [`Stft::reconstruct`].
pub fn apply_masks_and_reconstruct(
    mixture: &AudioSignal,
    masks_x: &[BinaryMask],
    masks_v: &[BinaryMask],
    cfg: &FramingConfig,
) -> Result<(AudioSignal, AudioSignal)> {
    let stft = Stft::new(*cfg)?;
    let x = stft.reconstruct(mixture, masks_x)?;
    let v = stft.reconstruct(mixture, masks_v)?;
    Ok((x, v))
}

/// Cached DFT plans and windows for one framing configuration.
#[derive(Clone)]
pub struct Stft {
    cfg: FramingConfig,
    analysis: Vec<f64>,
    synthesis: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("cfg", &self.cfg).finish()
    }
}

impl Stft {
    pub fn new(cfg: FramingConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            cfg,
            analysis: hamming(cfg.frame_len),
            synthesis: hann(cfg.frame_len),
            forward: planner.plan_fft_forward(cfg.dft_size),
            inverse: planner.plan_fft_inverse(cfg.dft_size),
        })
    }

    pub fn config(&self) -> &FramingConfig {
        &self.cfg
    }

    /// Full `dft_size`-bin DFT of one Hamming-windowed, zero-padded frame.
    pub fn frame_spectrum(&self, frame: &[f64]) -> Result<Vec<Complex64>> {
        if frame.len() != self.cfg.frame_len {
            return Err(Error::FrameLength {
                expected: self.cfg.frame_len,
                got: frame.len(),
            });
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.cfg.dft_size];
        for ((b, &s), &w) in buf.iter_mut().zip(frame).zip(&self.analysis) {
            b.re = s * w;
        }
        self.forward.process(&mut buf);
        Ok(buf)
    }

    pub fn log_spectrum(&self, frame: &[f64]) -> Result<LogSpectralFrame> {
        let spec = self.frame_spectrum(frame)?;
        let floor = self.cfg.log_floor;
        let values = spec[..self.cfg.n_bins()]
            .iter()
            .map(|c| c.norm().max(floor).log10())
            .collect();
        Ok(LogSpectralFrame { values })
    }

    /// Frames the signal and returns one log spectrum per frame.
    pub fn analyze(&self, signal: &AudioSignal) -> Result<Vec<LogSpectralFrame>> {
        frame_signal(signal, &self.cfg)?
            .iter()
            .map(|f| self.log_spectrum(f))
            .collect()
    }

    /// Masks each frame's DFT (mirrored onto the upper half), inverts it,
    /// applies the Hann synthesis window and overlap-adds. The sum is divided
    /// by the accumulated Hamming × Hann envelope, floored at
    /// [`ENVELOPE_FLOOR`]; with all-ones masks this reproduces the covered
    /// part of the input.
    pub fn reconstruct(&self, mixture: &AudioSignal, masks: &[BinaryMask]) -> Result<AudioSignal> {
        let frames = frame_signal(mixture, &self.cfg)?;
        if frames.len() != masks.len() {
            return Err(Error::FrameCountMismatch {
                frames: frames.len(),
                masks: masks.len(),
            });
        }
        let d = self.cfg.dft_size;
        let half = d / 2;
        let n_bins = self.cfg.n_bins();
        let flen = self.cfg.frame_len;
        let padded_len = (frames.len() - 1) * self.cfg.hop + flen;
        let mut out = vec![0.0; padded_len];
        let mut env = vec![0.0; padded_len];
        let scale = 1.0 / d as f64;

        for (r, (frame, mask)) in frames.iter().zip(masks).enumerate() {
            if mask.len() != n_bins {
                return Err(Error::DimensionMismatch {
                    expected: n_bins,
                    got: mask.len(),
                });
            }
            let mut spec = self.frame_spectrum(frame)?;
            for (k, c) in spec.iter_mut().enumerate() {
                let bin = if k <= half { k } else { d - k };
                if !mask.values[bin] {
                    *c = Complex64::new(0.0, 0.0);
                }
            }
            self.inverse.process(&mut spec);
            let start = r * self.cfg.hop;
            for t in 0..flen {
                out[start + t] += spec[t].re * scale * self.synthesis[t];
                env[start + t] += self.analysis[t] * self.synthesis[t];
            }
        }

        let mut samples: Vec<f64> = out.iter().zip(&env).map(|(o, e)| o / e.max(ENVELOPE_FLOOR)).collect();
        samples.resize(mixture.len(), 0.0);
        Ok(AudioSignal::new(samples, mixture.sample_rate))
    }
}
