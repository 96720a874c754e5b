//! One-dimensional maximization of the θ objective.

use crate::{Error, Result};

pub const DEFAULT_THETA_TOL: f64 = 0.1;
pub const DEFAULT_MAX_EVALS: usize = 20;

const GOLDEN: f64 = 0.381_966_011_250_105_1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSearch {
    pub theta: f64,
    pub value: f64,
    pub evals: usize,
}

/// Successive parabolic interpolation on `[lo, hi]`, seeded at the two ends
/// and the midpoint.
///
/// Each step fits a parabola through the best point and its two evaluated
/// neighbours and jumps to the vertex. The vertex is taken only if it falls
/// strictly inside the bracket formed by those neighbours and moves less than
/// half as far as the step before last; otherwise (including non-concave or
/// collinear fits) a golden-section step goes into the wider side of the
/// bracket. Vertex steps shorter than `tol / 2` are lengthened to `tol / 2`.
/// The search ends once the bracket around the best point is narrower than
/// `2·tol` (`tol` when the best point is an interval end) or after
/// `max_evals` evaluations, and returns the best point seen.
pub fn maximize_theta<F>(mut objective: F, lo: f64, hi: f64, tol: f64, max_evals: usize) -> Result<ThetaSearch>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidConfig(format!("empty θ interval [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("θ tolerance must be positive, got {tol}")));
    }
    let mut eval = |t: f64| -> Result<(f64, f64)> {
        let v = objective(t)?;
        if !v.is_finite() {
            return Err(Error::NonFinite(v));
        }
        Ok((t, v))
    };
    // kept sorted by θ
    let mut pts = vec![eval(lo)?, eval(0.5 * (lo + hi))?, eval(hi)?];
    let best_of = |pts: &[(f64, f64)]| {
        let mut b = 0;
        for (i, p) in pts.iter().enumerate() {
            if p.1 > pts[b].1 {
                b = i;
            }
        }
        b
    };
    // the last two step lengths, newest first
    let mut steps = [f64::INFINITY; 2];

    while pts.len() < max_evals.max(3) {
        let b = best_of(&pts);
        let x = pts[b].0;
        let br_lo = if b > 0 { pts[b - 1].0 } else { x };
        let br_hi = if b + 1 < pts.len() { pts[b + 1].0 } else { x };
        let interior = b > 0 && b + 1 < pts.len();
        if (interior && br_hi - br_lo < 2.0 * tol) || (!interior && br_hi - br_lo < tol) {
            break;
        }

        let c = b.clamp(1, pts.len() - 2);
        let vertex = parabola_vertex(pts[c - 1], pts[c], pts[c + 1])
            .filter(|&t| t > br_lo && t < br_hi && (t - x).abs() < 0.5 * steps[1]);
        let t = match vertex {
            Some(t) if (t - x).abs() >= 0.5 * tol => t,
            Some(t) => {
                let dir = if t > x || (t == x && br_hi - x >= x - br_lo) {
                    1.0
                } else {
                    -1.0
                };
                (x + dir * 0.5 * tol).clamp(br_lo, br_hi)
            }
            None => {
                if br_hi - x >= x - br_lo {
                    x + GOLDEN * (br_hi - x)
                } else {
                    x - GOLDEN * (x - br_lo)
                }
            }
        };
        if pts.iter().any(|p| p.0 == t) {
            break;
        }
        steps = [(t - x).abs(), steps[0]];
        let p = eval(t)?;
        let at = pts.partition_point(|q| q.0 < t);
        pts.insert(at, p);
    }
    let b = best_of(&pts);
    Ok(ThetaSearch {
        theta: pts[b].0,
        value: pts[b].1,
        evals: pts.len(),
    })
}

/// Vertex of the parabola through three points with increasing θ, if it opens
/// downward.
fn parabola_vertex(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> Option<f64> {
    let (x0, y0) = a;
    let (x1, y1) = b;
    let (x2, y2) = c;
    // second divided difference: half the curvature
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    if !(curv < 0.0) || !curv.is_finite() {
        return None;
    }
    let t = 0.5 * (x0 + x1) - d01 / (2.0 * curv);
    t.is_finite().then_some(t)
}
