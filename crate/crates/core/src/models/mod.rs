//! Diagonal-Gaussian HMM speaker models.
//!
//! Spectral features are log10 magnitudes; every probability held by a model
//! is a natural log.

mod baum_welch;
mod io;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::quantize::Codebook;
use crate::{Error, Result};

pub use baum_welch::{baum_welch, BaumWelchConfig, TrainedHmm};
pub use io::{load_model, save_model, ModelFile, SpeakerModel};

pub const VARIANCE_FLOOR: f64 = 1e-4;

/// Floor on initial-state probabilities taken from codebook occupancy.
pub const PI_FLOOR: f64 = 1e-6;

pub(crate) const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: var.len(),
            });
        }
        if let Some((dim, &value)) = var.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::NonPositiveVariance { dim, value });
        }
        Ok(Self { mean, var })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Natural-log density of a diagonal Gaussian:
/// `Σ_d −½((x−μ)/σ)² − ln σ − ½ ln 2π`.
pub fn log_gaussian_diag(x: &[f64], g: &DiagGaussian) -> Result<f64> {
    if x.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            got: x.len(),
        });
    }
    let mut acc = 0.0;
    for ((&xd, &m), &v) in x.iter().zip(&g.mean).zip(&g.var) {
        let sd = v.sqrt();
        let z = (xd - m) / sd;
        acc += -0.5 * z * z - sd.ln() - HALF_LN_2PI;
    }
    Ok(acc)
}

/// K-state HMM with diagonal-Gaussian emissions. `log_trans` is row-major,
/// `log_trans[i * K + j] = ln p(q_r = j | q_{r−1} = i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    pub log_pi: Vec<f64>,
    pub log_trans: Vec<f64>,
    pub states: Vec<DiagGaussian>,
}

impl HmmModel {
    /// Builds a model from probabilities (not logs), checking stochasticity.
    pub fn from_probs(pi: &[f64], trans: &[f64], states: Vec<DiagGaussian>) -> Result<Self> {
        let model = Self {
            log_pi: pi.iter().map(|p| p.ln()).collect(),
            log_trans: trans.iter().map(|p| p.ln()).collect(),
            states,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn k(&self) -> usize {
        self.states.len()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, DiagGaussian::dim)
    }

    #[inline]
    pub fn log_a(&self, i: usize, j: usize) -> f64 {
        self.log_trans[i * self.k() + j]
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(Error::ModelMismatch("HMM needs at least one state".into()));
        }
        if self.log_pi.len() != k || self.log_trans.len() != k * k {
            return Err(Error::ModelMismatch(format!(
                "K = {k} but π has {} entries and a has {}",
                self.log_pi.len(),
                self.log_trans.len()
            )));
        }
        let dim = self.dim();
        for s in &self.states {
            if s.dim() != dim || s.var.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.dim(),
                });
            }
            if let Some((d, &value)) = s.var.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::NonPositiveVariance { dim: d, value });
            }
        }
        let check = |row: &[f64], what: &str| -> Result<()> {
            let total: f64 = row.iter().map(|l| l.exp()).sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(Error::ModelMismatch(format!("{what} sums to {total}")));
            }
            Ok(())
        };
        check(&self.log_pi, "π")?;
        for i in 0..k {
            check(&self.log_trans[i * k..(i + 1) * k], "transition row")?;
        }
        Ok(())
    }

    /// Draws a state path and one feature vector per frame.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, frames: usize) -> (Vec<usize>, Vec<Vec<f64>>) {
        let k = self.k();
        let draw = |rng: &mut R, logp: &[f64]| -> usize {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, l) in logp.iter().enumerate() {
                acc += l.exp();
                if u < acc {
                    return i;
                }
            }
            k - 1
        };
        let mut path = Vec::with_capacity(frames);
        let mut obs = Vec::with_capacity(frames);
        for r in 0..frames {
            let q = if r == 0 {
                draw(rng, &self.log_pi)
            } else {
                let prev = path[r - 1];
                draw(rng, &self.log_trans[prev * k..(prev + 1) * k])
            };
            let s = &self.states[q];
            let x = s
                .mean
                .iter()
                .zip(&s.var)
                .map(|(m, v)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + v.sqrt() * z
                })
                .collect();
            path.push(q);
            obs.push(x);
        }
        (path, obs)
    }
}

/// Initial HMM from a trained codebook: state means and variances from the
/// codevectors and cluster variances, π from cluster occupancy (floored at
/// [`PI_FLOOR`] then renormalized), uniform transitions.
pub fn init_hmm_from_codebook(cb: &Codebook) -> HmmModel {
    let k = cb.k();
    let total: u64 = cb.occupancy.iter().sum();
    let mut pi: Vec<f64> = cb
        .occupancy
        .iter()
        .map(|&n| {
            let p = if total == 0 {
                1.0 / k as f64
            } else {
                n as f64 / total as f64
            };
            p.max(PI_FLOOR)
        })
        .collect();
    let z: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= z);
    let states = cb
        .codevectors
        .iter()
        .zip(&cb.variances)
        .map(|(m, v)| DiagGaussian {
            mean: m.clone(),
            var: v.iter().map(|x| x.max(VARIANCE_FLOOR)).collect(),
        })
        .collect();
    HmmModel {
        log_pi: pi.iter().map(|p| p.ln()).collect(),
        log_trans: vec![-(k as f64).ln(); k * k],
        states,
    }
}
