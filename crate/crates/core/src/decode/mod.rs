//! Joint decoding of the two state paths and the gain ratio θ.
//!
//! [`gfhmm_infer`] alternates a parallel Viterbi pass at fixed θ with a
//! maximization of the path likelihood over θ at fixed paths. [`gvq_infer`]
//! runs the same alternation with the gain-adapted VQ decoder. θ is held
//! constant within mega-frames (see [`mega_frame_segments`]).

mod theta;
mod viterbi;

use std::ops::Range;

pub use theta::{maximize_theta, ThetaSearch, DEFAULT_MAX_EVALS, DEFAULT_THETA_TOL};
pub use viterbi::{
    brute_force_decode, brute_force_ranked, naive_viterbi, parallel_viterbi, parallel_viterbi_segments, path_loglik,
    path_loglik_segments, BRUTE_FORCE_LIMIT,
};

use crate::gain::{gains_from_theta, GainContext};
use crate::models::HmmModel;
use crate::quantize::{gvq_fixed_score, gvq_score_per_frame, Codebook};
use crate::{Error, Result};

/// Mega-frame length in frames for 2 s at a 10 ms hop.
pub const DEFAULT_MEGA_FRAME: usize = 200;

/// Decoded paths and gain estimate. For the VQ decoders the paths hold
/// codevector indices and `logprob` holds the score Q. State indices are
/// 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub path_x: Vec<usize>,
    pub path_v: Vec<usize>,
    pub logprob: f64,
    /// Frame-weighted mean of `segment_thetas`.
    pub theta_hat: f64,
    pub segment_thetas: Vec<f64>,
    pub segments: Vec<Range<usize>>,
    /// Outer alternation count; 1 for a single decode at fixed θ.
    pub iterations: usize,
    /// Objective after every decode step and every θ step, in order.
    pub objective_trace: Vec<f64>,
}

impl DecodeResult {
    pub(crate) fn single_pass(
        path_x: Vec<usize>,
        path_v: Vec<usize>,
        logprob: f64,
        segments: Vec<Range<usize>>,
        segment_thetas: Vec<f64>,
    ) -> Self {
        Self {
            path_x,
            path_v,
            logprob,
            theta_hat: weighted_theta(&segments, &segment_thetas),
            segment_thetas,
            segments,
            iterations: 1,
            objective_trace: vec![logprob],
        }
    }

    /// θ in effect at every frame.
    pub fn frame_thetas(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.path_x.len());
        for (s, &t) in self.segments.iter().zip(&self.segment_thetas) {
            out.extend(std::iter::repeat_n(t, s.len()));
        }
        out
    }
}

fn weighted_theta(segments: &[Range<usize>], thetas: &[f64]) -> f64 {
    if let [t] = thetas {
        return *t;
    }
    let n: usize = segments.iter().map(|s| s.len()).sum();
    segments
        .iter()
        .zip(thetas)
        .map(|(s, t)| t * s.len() as f64)
        .sum::<f64>()
        / n as f64
}

/// Splits `0..frames` into mega-frames of `mega` frames. A trailing remainder
/// shorter than `mega` joins the previous segment, so sequences shorter than
/// two mega-frames form a single segment.
pub fn mega_frame_segments(frames: usize, mega: usize) -> Vec<Range<usize>> {
    if frames == 0 {
        return Vec::new();
    }
    let mega = mega.max(1);
    let n = (frames / mega).max(1);
    (0..n)
        .map(|s| s * mega..if s + 1 == n { frames } else { (s + 1) * mega })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferConfig {
    pub theta0: f64,
    /// Stop once no segment's θ moves by this much (dB).
    pub outer_tol: f64,
    pub max_outer: usize,
    pub theta_tol: f64,
    pub max_evals: usize,
    /// Mega-frame length in frames.
    pub mega_frame: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            theta0: 0.0,
            outer_tol: 0.25,
            max_outer: 10,
            theta_tol: DEFAULT_THETA_TOL,
            max_evals: DEFAULT_MAX_EVALS,
            mega_frame: DEFAULT_MEGA_FRAME,
        }
    }
}

impl InferConfig {
    fn validate(&self) -> Result<()> {
        if self.max_outer == 0 || !(self.outer_tol > 0.0) || !(self.theta_tol > 0.0) || self.mega_frame == 0 {
            return Err(Error::InvalidConfig(format!("bad inference settings {self:?}")));
        }
        if !self.theta0.is_finite() {
            return Err(Error::NonFinite(self.theta0));
        }
        Ok(())
    }
}

/// Maximizes `objective` over Θ and keeps `old` unless the search found a
/// strictly better value, so the alternation never decreases its objective.
fn theta_step<F>(mut objective: F, old: f64, ctx: &GainContext, cfg: &InferConfig) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let found = maximize_theta(
        &mut objective,
        ctx.theta_min,
        ctx.theta_max,
        cfg.theta_tol,
        cfg.max_evals,
    )?;
    let at_old = objective(old)?;
    Ok(if found.value > at_old { found.theta } else { old })
}

/// Gain-adapted FHMM decoding.
pub fn gfhmm_infer<Y: AsRef<[f64]> + Sync>(
    y_seq: &[Y],
    lx: &HmmModel,
    lv: &HmmModel,
    ctx: &GainContext,
    cfg: &InferConfig,
) -> Result<DecodeResult> {
    cfg.validate()?;
    viterbi::check_inputs(y_seq, lx, lv)?;
    let segments = mega_frame_segments(y_seq.len(), cfg.mega_frame);
    let mut thetas = vec![ctx.clamp(cfg.theta0); segments.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut res = parallel_viterbi_segments(y_seq, lx, lv, &segments, &thetas, ctx)?;
    trace.push(res.logprob);
    loop {
        iterations += 1;
        let mut moved = 0.0f64;
        for (s, seg) in segments.iter().enumerate() {
            let obj = |t: f64| {
                viterbi::emission_sum(
                    &res.path_x,
                    &res.path_v,
                    y_seq,
                    seg.clone(),
                    lx,
                    lv,
                    &gains_from_theta(t, ctx),
                )
            };
            let new = theta_step(obj, thetas[s], ctx, cfg)?;
            moved = moved.max((new - thetas[s]).abs());
            thetas[s] = new;
        }
        trace.push(path_loglik_segments(
            &res.path_x,
            &res.path_v,
            y_seq,
            lx,
            lv,
            &segments,
            &thetas,
            ctx,
        )?);
        if moved == 0.0 {
            break;
        }
        res = parallel_viterbi_segments(y_seq, lx, lv, &segments, &thetas, ctx)?;
        trace.push(res.logprob);
        if moved < cfg.outer_tol || iterations >= cfg.max_outer {
            break;
        }
    }
    Ok(DecodeResult {
        theta_hat: weighted_theta(&segments, &thetas),
        segment_thetas: thetas,
        segments,
        iterations,
        objective_trace: trace,
        ..res
    })
}

/// Gain-adapted VQ decoding: the same alternation with the per-frame
/// codevector search as the decode step and `Q(θ)` as the objective.
pub fn gvq_infer<Y: AsRef<[f64]> + Sync>(
    y_seq: &[Y],
    cb_x: &Codebook,
    cb_v: &Codebook,
    ctx: &GainContext,
    cfg: &InferConfig,
) -> Result<DecodeResult> {
    cfg.validate()?;
    if y_seq.is_empty() {
        return Err(Error::EmptyInput);
    }
    let segments = mega_frame_segments(y_seq.len(), cfg.mega_frame);
    let mut thetas = vec![ctx.clamp(cfg.theta0); segments.len()];
    let decode = |thetas: &[f64]| {
        let per_frame: Vec<f64> = segments
            .iter()
            .zip(thetas)
            .flat_map(|(s, &t)| std::iter::repeat_n(t, s.len()))
            .collect();
        gvq_score_per_frame(y_seq, cb_x, cb_v, &per_frame, ctx)
    };
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut cur = decode(&thetas)?;
    trace.push(cur.score);
    loop {
        iterations += 1;
        let mut moved = 0.0f64;
        let mut total = 0.0;
        for (s, seg) in segments.iter().enumerate() {
            let obj = |t: f64| {
                gvq_fixed_score(
                    &y_seq[seg.clone()],
                    &cur.index_x[seg.clone()],
                    &cur.index_v[seg.clone()],
                    cb_x,
                    cb_v,
                    t,
                    ctx,
                )
            };
            let new = theta_step(obj, thetas[s], ctx, cfg)?;
            moved = moved.max((new - thetas[s]).abs());
            thetas[s] = new;
            total += obj(new)?;
        }
        trace.push(total);
        if moved == 0.0 {
            break;
        }
        cur = decode(&thetas)?;
        trace.push(cur.score);
        if moved < cfg.outer_tol || iterations >= cfg.max_outer {
            break;
        }
    }
    Ok(DecodeResult {
        path_x: cur.index_x,
        path_v: cur.index_v,
        logprob: cur.score,
        theta_hat: weighted_theta(&segments, &thetas),
        segment_thetas: thetas,
        segments,
        iterations,
        objective_trace: trace,
    })
}

/// VQ decode at a fixed θ.
pub fn gvq_decode_fixed<Y: AsRef<[f64]>>(
    y_seq: &[Y],
    cb_x: &Codebook,
    cb_v: &Codebook,
    theta: f64,
    ctx: &GainContext,
) -> Result<DecodeResult> {
    let s = gvq_score_per_frame(y_seq, cb_x, cb_v, &vec![theta; y_seq.len()], ctx)?;
    Ok(DecodeResult::single_pass(
        s.index_x,
        s.index_v,
        s.score,
        vec![0..y_seq.len()],
        vec![theta],
    ))
}
