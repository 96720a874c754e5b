//! Two-chain Viterbi over the K×K product space, its naive and exhaustive
//! reference versions, and the path-conditioned likelihood.

use std::ops::Range;

use rayon::prelude::*;

use super::DecodeResult;
use crate::gain::{gains_from_theta, GainContext, GainPair};
use crate::mixmax::{log_b_jk, ShiftedStates};
use crate::models::HmmModel;
use crate::{Error, Result};

/// Largest joint path-pair count [`brute_force_decode`] will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

pub(crate) fn check_inputs<Y: AsRef<[f64]>>(y_seq: &[Y], lx: &HmmModel, lv: &HmmModel) -> Result<()> {
    if y_seq.is_empty() {
        return Err(Error::EmptyInput);
    }
    if lx.k() != lv.k() {
        return Err(Error::ModelMismatch(format!(
            "target model has K = {} but interference model has K = {}",
            lx.k(),
            lv.k()
        )));
    }
    let dim = lx.dim();
    if lv.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: lv.dim(),
        });
    }
    if let Some(y) = y_seq.iter().find(|y| y.as_ref().len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: y.as_ref().len(),
        });
    }
    Ok(())
}

/// Per-frame gain pairs from per-segment θ values.
pub(crate) fn frame_gains(segments: &[Range<usize>], thetas: &[f64], ctx: &GainContext) -> Vec<GainPair> {
    let mut out = Vec::new();
    for (seg, &theta) in segments.iter().zip(thetas) {
        let gp = gains_from_theta(theta, ctx);
        out.extend(std::iter::repeat_n(gp, seg.len()));
    }
    out
}

/// Emission table, `em[r][j·K + k] = ln b̂_{j,k}(y^r)`.
fn emissions<Y: AsRef<[f64]> + Sync>(
    y_seq: &[Y],
    lx: &HmmModel,
    lv: &HmmModel,
    segments: &[Range<usize>],
    thetas: &[f64],
    ctx: &GainContext,
) -> Vec<Vec<f64>> {
    let k = lx.k();
    let mut em = vec![Vec::new(); y_seq.len()];
    for (seg, &theta) in segments.iter().zip(thetas) {
        let gp = gains_from_theta(theta, ctx);
        let xs = ShiftedStates::new(lx, gp.log10_gx);
        let vs = ShiftedStates::new(lv, gp.log10_gv);
        em[seg.clone()]
            .par_iter_mut()
            .zip(&y_seq[seg.clone()])
            .for_each(|(row, y)| {
                let y = y.as_ref();
                *row = (0..k * k)
                    .map(|jk| ShiftedStates::log_b(y, &xs, jk / k, &vs, jk % k))
                    .collect();
            });
    }
    em
}

fn check_segments(segments: &[Range<usize>], thetas: &[f64], r: usize) -> Result<()> {
    let mut next = 0;
    for s in segments {
        if s.start != next || s.end <= s.start {
            return Err(Error::InvalidConfig(format!("segments do not tile 0..{r}")));
        }
        next = s.end;
    }
    if next != r || segments.len() != thetas.len() {
        return Err(Error::InvalidConfig(format!("segments do not tile 0..{r}")));
    }
    if let Some(&t) = thetas.iter().find(|t| !t.is_finite()) {
        return Err(Error::NonFinite(t));
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Recursion {
    TwoStage,
    Naive,
}

/// Parallel Viterbi at a single θ for the whole sequence.
pub fn parallel_viterbi<Y: AsRef<[f64]> + Sync>(
    y_seq: &[Y],
    lx: &HmmModel,
    lv: &HmmModel,
    theta: f64,
    ctx: &GainContext,
) -> Result<DecodeResult> {
    parallel_viterbi_segments(y_seq, lx, lv, &[0..y_seq.len()], &[theta], ctx)
}

/// Parallel Viterbi with one θ per segment; `segments` must tile `0..R`.
pub fn parallel_viterbi_segments<Y: AsRef<[f64]> + Sync>(
    y_seq: &[Y],
    lx: &HmmModel,
    lv: &HmmModel,
    segments: &[Range<usize>],
    thetas: &[f64],
    ctx: &GainContext,
) -> Result<DecodeResult> {
    run_viterbi(y_seq, lx, lv, segments, thetas, ctx, Recursion::TwoStage)
}

/// The same decoder with the O(K⁴) double max over (i, ℓ). Reference for the
/// two-stage recursion; gives bit-identical results.
pub fn naive_viterbi<Y: AsRef<[f64]> + Sync>(
    y_seq: &[Y],
    lx: &HmmModel,
    lv: &HmmModel,
    theta: f64,
    ctx: &GainContext,
) -> Result<DecodeResult> {
    run_viterbi(y_seq, lx, lv, &[0..y_seq.len()], &[theta], ctx, Recursion::Naive)
}

fn run_viterbi<Y: AsRef<[f64]> + Sync>(
    y_seq: &[Y],
    lx: &HmmModel,
    lv: &HmmModel,
    segments: &[Range<usize>],
    thetas: &[f64],
    ctx: &GainContext,
    mode: Recursion,
) -> Result<DecodeResult> {
    check_inputs(y_seq, lx, lv)?;
    check_segments(segments, thetas, y_seq.len())?;
    let k = lx.k();
    let kk = k * k;
    let r_len = y_seq.len();
    let em = emissions(y_seq, lx, lv, segments, thetas, ctx);

    let ax = &lx.log_trans;
    let av = &lv.log_trans;
    // av transposed so the inner loop over ℓ is contiguous
    let mut av_t = vec![0.0; kk];
    for l in 0..k {
        for kv in 0..k {
            av_t[kv * k + l] = av[l * k + kv];
        }
    }

    let mut delta: Vec<f64> = (0..kk)
        .map(|jk| lx.log_pi[jk / k] + lv.log_pi[jk % k] + em[0][jk])
        .collect();
    let mut next = vec![0.0; kk];
    // ψ_r(j,k) packed as i·K + ℓ
    let mut psi = vec![0u32; r_len.saturating_sub(1) * kk];
    let mut m1 = vec![0.0; kk];
    let mut m1_arg = vec![0u32; kk];

    for r in 1..r_len {
        let psi_r = &mut psi[(r - 1) * kk..r * kk];
        match mode {
            Recursion::TwoStage => {
                // stage 1: m1(j,ℓ) = max_i δ(i,ℓ) + a^x_ij
                for j in 0..k {
                    let a0 = ax[j];
                    for l in 0..k {
                        m1[j * k + l] = delta[l] + a0;
                        m1_arg[j * k + l] = 0;
                    }
                }
                for i in 1..k {
                    let drow = &delta[i * k..(i + 1) * k];
                    for j in 0..k {
                        let a = ax[i * k + j];
                        let mrow = &mut m1[j * k..(j + 1) * k];
                        let arow = &mut m1_arg[j * k..(j + 1) * k];
                        for l in 0..k {
                            let v = drow[l] + a;
                            if v > mrow[l] {
                                mrow[l] = v;
                                arow[l] = i as u32;
                            }
                        }
                    }
                }
                // stage 2: max_ℓ m1(j,ℓ) + a^v_ℓk
                for j in 0..k {
                    let mrow = &m1[j * k..(j + 1) * k];
                    for kv in 0..k {
                        let arow = &av_t[kv * k..(kv + 1) * k];
                        let mut best = mrow[0] + arow[0];
                        let mut best_l = 0;
                        for l in 1..k {
                            let v = mrow[l] + arow[l];
                            if v > best {
                                best = v;
                                best_l = l;
                            }
                        }
                        let jk = j * k + kv;
                        next[jk] = best + em[r][jk];
                        psi_r[jk] = m1_arg[j * k + best_l] * k as u32 + best_l as u32;
                    }
                }
            }
            Recursion::Naive => {
                for j in 0..k {
                    for kv in 0..k {
                        let mut best = f64::NAN;
                        let mut arg = 0u32;
                        for l in 0..k {
                            for i in 0..k {
                                let v = delta[i * k + l] + ax[i * k + j] + av[l * k + kv];
                                if best.is_nan() || v > best {
                                    best = v;
                                    arg = (i * k + l) as u32;
                                }
                            }
                        }
                        let jk = j * k + kv;
                        next[jk] = best + em[r][jk];
                        psi_r[jk] = arg;
                    }
                }
            }
        }
        std::mem::swap(&mut delta, &mut next);
    }

    let mut best_jk = 0;
    for jk in 1..kk {
        if delta[jk] > delta[best_jk] {
            best_jk = jk;
        }
    }
    let logprob = delta[best_jk];
    if !logprob.is_finite() {
        return Err(Error::NonFinite(logprob));
    }

    let mut path_x = vec![0; r_len];
    let mut path_v = vec![0; r_len];
    let mut cur = best_jk;
    path_x[r_len - 1] = cur / k;
    path_v[r_len - 1] = cur % k;
    for r in (1..r_len).rev() {
        let p = psi[(r - 1) * kk + cur] as usize;
        let (i, l) = (p / k, p % k);
        path_x[r - 1] = i;
        path_v[r - 1] = l;
        cur = i * k + l;
    }

    Ok(DecodeResult::single_pass(
        path_x,
        path_v,
        logprob,
        segments.to_vec(),
        thetas.to_vec(),
    ))
}

/// Exhaustive search over every joint path pair. Ties go to the
/// lexicographically smallest `(path_x, path_v)`.
pub fn brute_force_decode<Y: AsRef<[f64]> + Sync>(
    y_seq: &[Y],
    lx: &HmmModel,
    lv: &HmmModel,
    theta: f64,
    ctx: &GainContext,
) -> Result<DecodeResult> {
    brute_force_ranked(y_seq, lx, lv, theta, ctx).map(|(best, _)| best)
}

/// [`brute_force_decode`] plus the score of the best path pair other than the
/// winner, which tells whether the optimum is unique.
pub fn brute_force_ranked<Y: AsRef<[f64]> + Sync>(
    y_seq: &[Y],
    lx: &HmmModel,
    lv: &HmmModel,
    theta: f64,
    ctx: &GainContext,
) -> Result<(DecodeResult, f64)> {
    check_inputs(y_seq, lx, lv)?;
    let k = lx.k();
    let r_len = y_seq.len();
    let count = (k as f64).powi(2 * r_len as i32);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(count));
    }
    let seg = [0..r_len];
    let em = emissions(y_seq, lx, lv, &seg, &[theta], ctx);

    // digits: path_x[0..R] then path_v[0..R], last digit fastest
    let mut digits = vec![0usize; 2 * r_len];
    let mut best = f64::NEG_INFINITY;
    let mut runner_up = f64::NEG_INFINITY;
    let mut best_digits = digits.clone();
    loop {
        let (px, pv) = digits.split_at(r_len);
        let score = accumulate(px, pv, lx, lv, |r, j, kv| em[r][j * k + kv]);
        if score > best {
            runner_up = best;
            best = score;
            best_digits.copy_from_slice(&digits);
        } else if score > runner_up {
            runner_up = score;
        }
        let mut pos = digits.len();
        loop {
            if pos == 0 {
                let (px, pv) = best_digits.split_at(r_len);
                if !best.is_finite() {
                    return Err(Error::NonFinite(best));
                }
                let res = DecodeResult::single_pass(px.to_vec(), pv.to_vec(), best, seg.to_vec(), vec![theta]);
                return Ok((res, runner_up));
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < k {
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Path score in the recursion's summation order, so that a Viterbi path
/// rescored here reproduces the decoder's log-probability exactly.
fn accumulate(px: &[usize], pv: &[usize], lx: &HmmModel, lv: &HmmModel, b: impl Fn(usize, usize, usize) -> f64) -> f64 {
    let mut acc = lx.log_pi[px[0]] + lv.log_pi[pv[0]] + b(0, px[0], pv[0]);
    for r in 1..px.len() {
        acc = acc + lx.log_a(px[r - 1], px[r]) + lv.log_a(pv[r - 1], pv[r]) + b(r, px[r], pv[r]);
    }
    acc
}

fn check_path(path: &[usize], r_len: usize, k: usize) -> Result<()> {
    if path.len() != r_len {
        return Err(Error::FrameCountMismatch {
            frames: r_len,
            masks: path.len(),
        });
    }
    if let Some((frame, &index)) = path.iter().enumerate().find(|(_, &q)| q >= k) {
        return Err(Error::InvalidPath { frame, index, k });
    }
    Ok(())
}

/// `L(θ | q^x, q^v)`: log π, transition and emission terms of fixed paths.
pub fn path_loglik<Y: AsRef<[f64]>>(
    path_x: &[usize],
    path_v: &[usize],
    y_seq: &[Y],
    lx: &HmmModel,
    lv: &HmmModel,
    theta: f64,
    ctx: &GainContext,
) -> Result<f64> {
    path_loglik_segments(path_x, path_v, y_seq, lx, lv, &[0..y_seq.len()], &[theta], ctx)
}

#[allow(clippy::too_many_arguments)]
pub fn path_loglik_segments<Y: AsRef<[f64]>>(
    path_x: &[usize],
    path_v: &[usize],
    y_seq: &[Y],
    lx: &HmmModel,
    lv: &HmmModel,
    segments: &[Range<usize>],
    thetas: &[f64],
    ctx: &GainContext,
) -> Result<f64> {
    check_inputs(y_seq, lx, lv)?;
    check_segments(segments, thetas, y_seq.len())?;
    check_path(path_x, y_seq.len(), lx.k())?;
    check_path(path_v, y_seq.len(), lv.k())?;
    let gains = frame_gains(segments, thetas, ctx);
    let mut b = Vec::with_capacity(y_seq.len());
    for (r, y) in y_seq.iter().enumerate() {
        b.push(log_b_jk(
            y.as_ref(),
            &lx.states[path_x[r]],
            &lv.states[path_v[r]],
            &gains[r],
        )?);
    }
    Ok(accumulate(path_x, path_v, lx, lv, |r, _, _| b[r]))
}

/// θ-dependent part of the path likelihood over `frames`: `Σ_r ln b̂`.
pub(crate) fn emission_sum<Y: AsRef<[f64]>>(
    path_x: &[usize],
    path_v: &[usize],
    y_seq: &[Y],
    frames: Range<usize>,
    lx: &HmmModel,
    lv: &HmmModel,
    gp: &GainPair,
) -> Result<f64> {
    let mut acc = 0.0;
    for r in frames {
        acc += log_b_jk(y_seq[r].as_ref(), &lx.states[path_x[r]], &lv.states[path_v[r]], gp)?;
    }
    Ok(acc)
}
