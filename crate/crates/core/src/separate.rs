//! End-to-end separation: log-spectral analysis, joint inference, binary
//! masks and overlap-add reconstruction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decode::{gfhmm_infer, gvq_decode_fixed, gvq_infer, parallel_viterbi, DecodeResult, InferConfig};
use crate::gain::{estimate_gy, gains_from_theta, GainContext, DEFAULT_THETA_MAX, DEFAULT_THETA_MIN};
use crate::models::{HmmModel, SpeakerModel};
use crate::quantize::Codebook;
use crate::signal::{AudioSignal, BinaryMask, FramingConfig, Stft};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gfhmm,
    Gvq,
    Fhmm,
    Vq,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Gfhmm, Method::Gvq, Method::Fhmm, Method::Vq];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gfhmm => "gfhmm",
            Method::Gvq => "gvq",
            Method::Fhmm => "fhmm",
            Method::Vq => "vq",
        }
    }

    pub fn uses_hmm(self) -> bool {
        matches!(self, Method::Gfhmm | Method::Fhmm)
    }

    pub fn gain_adapted(self) -> bool {
        matches!(self, Method::Gfhmm | Method::Gvq)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?} (expected gfhmm, gvq, fhmm or vq)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparateOptions {
    pub infer: InferConfig,
    /// Skip the θ search and decode at this θ.
    pub fixed_theta: Option<f64>,
    /// Force `g_y / G0 = √2` so that θ = 0 means unit gains.
    pub unit_gains: bool,
    /// Nominal source RMS of the training material.
    pub g0: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub mega_frame_secs: f64,
}

impl Default for SeparateOptions {
    fn default() -> Self {
        Self {
            infer: InferConfig::default(),
            fixed_theta: None,
            unit_gains: false,
            g0: 1.0,
            theta_min: DEFAULT_THETA_MIN,
            theta_max: DEFAULT_THETA_MAX,
            mega_frame_secs: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub method: Method,
    pub theta_hat: f64,
    pub segment_thetas: Vec<f64>,
    pub iterations: usize,
    /// P(θ̃) for the HMM methods, Q(θ̃) for the VQ methods.
    pub logprob: f64,
    pub gy: f64,
    pub g0: f64,
    pub frames: usize,
    pub path_x: Vec<usize>,
    pub path_v: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Separation {
    pub target: AudioSignal,
    pub interference: AudioSignal,
    pub result: DecodeResult,
    pub diagnostics: Diagnostics,
}

fn masks_from_means<'a>(
    result: &DecodeResult,
    mean_x: impl Fn(usize) -> &'a [f64],
    mean_v: impl Fn(usize) -> &'a [f64],
    ctx: &GainContext,
) -> (Vec<BinaryMask>, Vec<BinaryMask>) {
    let thetas = result.frame_thetas();
    let mut mx = Vec::with_capacity(thetas.len());
    let mut mv = Vec::with_capacity(thetas.len());
    for (r, theta) in thetas.into_iter().enumerate() {
        let gp = gains_from_theta(theta, ctx);
        let (a, b) = (mean_x(result.path_x[r]), mean_v(result.path_v[r]));
        let h = BinaryMask::new(
            a.iter()
                .zip(b)
                .map(|(a, b)| a + gp.log10_gx >= b + gp.log10_gv)
                .collect(),
        );
        mv.push(h.complement());
        mx.push(h);
    }
    (mx, mv)
}

/// Target mask is 1 wherever the decoded target state's gain-shifted mean is
/// at least the interference one; the interference mask is its complement.
pub fn build_hmm_masks(
    result: &DecodeResult,
    lx: &HmmModel,
    lv: &HmmModel,
    ctx: &GainContext,
) -> (Vec<BinaryMask>, Vec<BinaryMask>) {
    masks_from_means(result, |j| &lx.states[j].mean, |k| &lv.states[k].mean, ctx)
}

/// As [`build_hmm_masks`] with codevectors in place of state means.
pub fn build_vq_masks(
    result: &DecodeResult,
    cb_x: &Codebook,
    cb_v: &Codebook,
    ctx: &GainContext,
) -> (Vec<BinaryMask>, Vec<BinaryMask>) {
    masks_from_means(result, |i| &cb_x.codevectors[i], |j| &cb_v.codevectors[j], ctx)
}

fn check_dim(model: &SpeakerModel, cfg: &FramingConfig) -> Result<()> {
    if model.dim() != cfg.n_bins() {
        return Err(Error::ModelMismatch(format!(
            "model dimension {} does not match {} spectral bins",
            model.dim(),
            cfg.n_bins()
        )));
    }
    Ok(())
}

/// Separates `mixture` into target and interference estimates.
pub fn separate(
    mixture: &AudioSignal,
    model_x: &SpeakerModel,
    model_v: &SpeakerModel,
    cfg: &FramingConfig,
    method: Method,
    opts: &SeparateOptions,
) -> Result<Separation> {
    check_dim(model_x, cfg)?;
    check_dim(model_v, cfg)?;
    let stft = Stft::new(*cfg)?;
    let frames = stft.analyze(mixture)?;
    let gy = estimate_gy(mixture)?;
    let unit = opts.unit_gains || !method.gain_adapted();
    let ratio_gy = if unit { std::f64::consts::SQRT_2 * opts.g0 } else { gy };
    let ctx = GainContext::with_interval(ratio_gy, opts.g0, opts.theta_min, opts.theta_max)?;
    let fixed = if method.gain_adapted() {
        opts.fixed_theta
    } else {
        Some(0.0)
    };
    let infer = InferConfig {
        mega_frame: cfg.frames_per(opts.mega_frame_secs).max(1),
        ..opts.infer
    };

    let (result, (mx, mv)) = if method.uses_hmm() {
        let (lx, lv) = (model_x.as_hmm()?, model_v.as_hmm()?);
        let res = match fixed {
            Some(t) => parallel_viterbi(&frames, lx, lv, t, &ctx)?,
            None => gfhmm_infer(&frames, lx, lv, &ctx, &infer)?,
        };
        let masks = build_hmm_masks(&res, lx, lv, &ctx);
        (res, masks)
    } else {
        let (cx, cv) = (model_x.as_codebook()?, model_v.as_codebook()?);
        let res = match fixed {
            Some(t) => gvq_decode_fixed(&frames, cx, cv, t, &ctx)?,
            None => gvq_infer(&frames, cx, cv, &ctx, &infer)?,
        };
        let masks = build_vq_masks(&res, cx, cv, &ctx);
        (res, masks)
    };

    let target = stft.reconstruct(mixture, &mx)?;
    let interference = stft.reconstruct(mixture, &mv)?;
    let diagnostics = Diagnostics {
        method,
        theta_hat: result.theta_hat,
        segment_thetas: result.segment_thetas.clone(),
        iterations: result.iterations,
        logprob: result.logprob,
        gy,
        g0: opts.g0,
        frames: frames.len(),
        path_x: result.path_x.clone(),
        path_v: result.path_v.clone(),
    };
    Ok(Separation {
        target,
        interference,
        result,
        diagnostics,
    })
}
