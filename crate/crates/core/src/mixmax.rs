//! Max-approximation observation model.
//!
//! The mixture's log spectrum is approximated by the elementwise maximum of
//! the gain-shifted source log spectra. Under that approximation the joint
//! emission density of a state pair (j, k) is, per bin, a Gaussian centred on
//! the larger shifted mean with the variance of whichever source owns it.

use crate::gain::GainPair;
use crate::models::{DiagGaussian, HmmModel, HALF_LN_2PI};
use crate::signal::LogSpectralFrame;
use crate::{Error, Result};

/// `y(d) = max(x(d) + log10 g_x, v(d) + log10 g_v)`.
pub fn mixmax_combine(x: &[f64], v: &[f64], gp: &GainPair) -> Result<LogSpectralFrame> {
    if x.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: v.len(),
        });
    }
    Ok(x.iter()
        .zip(v)
        .map(|(a, b)| (a + gp.log10_gx).max(b + gp.log10_gv))
        .collect::<Vec<_>>()
        .into())
}

/// Natural-log joint emission `b̂_{j,k}(y | θ)`. Where the shifted means tie,
/// the target's variance is used.
pub fn log_b_jk(y: &[f64], state_x: &DiagGaussian, state_v: &DiagGaussian, gp: &GainPair) -> Result<f64> {
    let dim = state_x.dim();
    for got in [state_v.dim(), y.len()] {
        if got != dim {
            return Err(Error::DimensionMismatch { expected: dim, got });
        }
    }
    let mut acc = 0.0;
    for d in 0..dim {
        let mx = state_x.mean[d] + gp.log10_gx;
        let mv = state_v.mean[d] + gp.log10_gv;
        let (m, var) = if mx >= mv {
            (mx, state_x.var[d])
        } else {
            (mv, state_v.var[d])
        };
        if !(var > 0.0) {
            return Err(Error::NonPositiveVariance { dim: d, value: var });
        }
        let sd = var.sqrt();
        let z = (y[d] - m) / sd;
        acc += -0.5 * z * z - sd.ln() - HALF_LN_2PI;
    }
    Ok(acc)
}

/// One model's state means shifted by a log10 gain, with σ and ln σ cached.
/// Evaluating [`ShiftedStates::log_b`] gives the same bits as [`log_b_jk`].
#[derive(Debug, Clone)]
pub(crate) struct ShiftedStates {
    dim: usize,
    mean: Vec<f64>,
    sd: Vec<f64>,
    ln_sd: Vec<f64>,
}

impl ShiftedStates {
    pub(crate) fn new(model: &HmmModel, log10_gain: f64) -> Self {
        let dim = model.dim();
        let mut mean = Vec::with_capacity(model.k() * dim);
        let mut sd = Vec::with_capacity(model.k() * dim);
        for s in &model.states {
            mean.extend(s.mean.iter().map(|m| m + log10_gain));
            sd.extend(s.var.iter().map(|v| v.sqrt()));
        }
        let ln_sd = sd.iter().map(|s| s.ln()).collect();
        Self { dim, mean, sd, ln_sd }
    }

    #[inline]
    pub(crate) fn log_b(y: &[f64], xs: &ShiftedStates, j: usize, vs: &ShiftedStates, k: usize) -> f64 {
        let dim = xs.dim;
        let (xo, vo) = (j * dim, k * dim);
        let mut acc = 0.0;
        for d in 0..dim {
            let mx = xs.mean[xo + d];
            let mv = vs.mean[vo + d];
            let (m, sd, ln_sd) = if mx >= mv {
                (mx, xs.sd[xo + d], xs.ln_sd[xo + d])
            } else {
                (mv, vs.sd[vo + d], vs.ln_sd[vo + d])
            };
            let z = (y[d] - m) / sd;
            acc += -0.5 * z * z - ln_sd - HALF_LN_2PI;
        }
        acc
    }
}
