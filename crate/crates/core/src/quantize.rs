//! LBG codebook training and the gain-adapted VQ frame decoder.

use rayon::prelude::*;

use crate::gain::{gains_from_theta, GainContext, GainPair};
use crate::models::VARIANCE_FLOOR;
use crate::{Error, Result};

/// K codevectors plus the per-cluster diagonal variances and occupancy
/// counts of the final partition (used to initialize an HMM).
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub codevectors: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub occupancy: Vec<u64>,
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.codevectors.len()
    }

    pub fn dim(&self) -> usize {
        self.codevectors.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbgConfig {
    /// Codebook size; must be a power of two.
    pub k: usize,
    /// Lloyd iterations per splitting level.
    pub max_iters: usize,
    /// Stop a level once `(D_prev − D) / D_prev < rel_tol`.
    pub rel_tol: f64,
    /// Each split moves a codevector by ±`split_delta` in every dimension.
    pub split_delta: f64,
    pub var_floor: f64,
}

impl Default for LbgConfig {
    fn default() -> Self {
        Self {
            k: 64,
            max_iters: 50,
            rel_tol: 1e-4,
            split_delta: 0.01,
            var_floor: VARIANCE_FLOOR,
        }
    }
}

impl LbgConfig {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Default::default()
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn mean_of<V: AsRef<[f64]>>(vectors: &[V], members: impl Iterator<Item = usize>, dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for i in members {
        acc.iter_mut().zip(vectors[i].as_ref()).for_each(|(a, x)| *a += x);
        n += 1;
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    acc
}

pub fn train_lbg<V: AsRef<[f64]> + Sync>(vectors: &[V], cfg: &LbgConfig) -> Result<Codebook> {
    train_lbg_traced(vectors, cfg).map(|(cb, _)| cb)
}

/// Like [`train_lbg`], also returning the distortion after every Lloyd
/// assignment step, one list per splitting level.
pub fn train_lbg_traced<V: AsRef<[f64]> + Sync>(vectors: &[V], cfg: &LbgConfig) -> Result<(Codebook, Vec<Vec<f64>>)> {
    if cfg.k == 0 || !cfg.k.is_power_of_two() {
        return Err(Error::InvalidConfig(format!(
            "codebook size {} is not a power of two",
            cfg.k
        )));
    }
    if vectors.len() < cfg.k {
        return Err(Error::TooFewVectors {
            needed: cfg.k,
            got: vectors.len(),
        });
    }
    let dim = vectors[0].as_ref().len();
    if dim == 0 {
        return Err(Error::EmptyInput);
    }
    if let Some(v) = vectors.iter().find(|v| v.as_ref().len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.as_ref().len(),
        });
    }

    let mut centroids = vec![mean_of(vectors, 0..vectors.len(), dim)];
    let mut trace = Vec::new();
    let assignment = loop {
        let (assign, level_trace) = lloyd(vectors, &mut centroids, cfg);
        trace.push(level_trace);
        if centroids.len() == cfg.k {
            break assign;
        }
        centroids = centroids
            .iter()
            .flat_map(|c| {
                let up = c.iter().map(|x| x + cfg.split_delta).collect::<Vec<_>>();
                let down = c.iter().map(|x| x - cfg.split_delta).collect::<Vec<_>>();
                [up, down]
            })
            .collect();
    };

    let k = centroids.len();
    let mut occupancy = vec![0u64; k];
    let mut variances = vec![vec![0.0; dim]; k];
    for (x, &c) in vectors.iter().zip(&assignment) {
        occupancy[c] += 1;
        for (d, v) in variances[c].iter_mut().enumerate() {
            let e = x.as_ref()[d] - centroids[c][d];
            *v += e * e;
        }
    }
    for (var, &n) in variances.iter_mut().zip(&occupancy) {
        for v in var.iter_mut() {
            *v = if n > 0 { *v / n as f64 } else { 0.0 };
            *v = v.max(cfg.var_floor);
        }
    }
    Ok((
        Codebook {
            codevectors: centroids,
            variances,
            occupancy,
        },
        trace,
    ))
}

/// Lloyd iterations at a fixed codebook size. Centroids are left as the means
/// of the returned assignment.
fn lloyd<V: AsRef<[f64]> + Sync>(vectors: &[V], centroids: &mut [Vec<f64>], cfg: &LbgConfig) -> (Vec<usize>, Vec<f64>) {
    let k = centroids.len();
    let dim = centroids[0].len();
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    let mut assign = Vec::new();
    for _ in 0..cfg.max_iters.max(1) {
        assign = vectors
            .par_iter()
            .map(|x| nearest(x.as_ref(), centroids))
            .collect::<Vec<_>>();
        repair_empty(vectors, centroids, &mut assign);

        let distortion = vectors
            .iter()
            .zip(&assign)
            .map(|(x, &c)| sq_dist(x.as_ref(), &centroids[c]))
            .sum::<f64>()
            / vectors.len() as f64;
        trace.push(distortion);

        let mut members = vec![Vec::new(); k];
        for (i, &c) in assign.iter().enumerate() {
            members[c].push(i);
        }
        for (c, m) in centroids.iter_mut().zip(&members) {
            *c = mean_of(vectors, m.iter().copied(), dim);
        }

        if distortion == 0.0 || (prev - distortion) < cfg.rel_tol * prev {
            break;
        }
        prev = distortion;
    }
    (assign, trace)
}

/// Gives every empty cell the vector farthest from its centroid in the most
/// populous cell.
fn repair_empty<V: AsRef<[f64]>>(vectors: &[V], centroids: &mut [Vec<f64>], assign: &mut [usize]) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        assign.iter().for_each(|&c| counts[c] += 1);
        let Some(empty) = counts.iter().position(|&n| n == 0) else {
            return;
        };
        let mut donor = 0;
        for (c, &n) in counts.iter().enumerate() {
            if n > counts[donor] {
                donor = c;
            }
        }
        let mut far = usize::MAX;
        let mut far_d = -1.0;
        for (i, &c) in assign.iter().enumerate() {
            if c == donor {
                let d = sq_dist(vectors[i].as_ref(), &centroids[donor]);
                if d > far_d {
                    far_d = d;
                    far = i;
                }
            }
        }
        assign[far] = empty;
        centroids[empty] = vectors[far].as_ref().to_vec();
    }
}

/// Best codevector pair for one frame at a given θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VqMatch {
    pub index_x: usize,
    pub index_v: usize,
    pub cost: f64,
}

/// `Σ_d (y(d) − max(c_x(d) + log10 g_x, c_v(d) + log10 g_v))²`.
pub fn pair_cost(y: &[f64], cx: &[f64], cv: &[f64], gp: &GainPair) -> f64 {
    y.iter()
        .zip(cx)
        .zip(cv)
        .map(|((&y, &a), &b)| {
            let e = y - (a + gp.log10_gx).max(b + gp.log10_gv);
            e * e
        })
        .sum()
}

fn check_dims(y_dim: usize, cb_x: &Codebook, cb_v: &Codebook) -> Result<()> {
    for got in [cb_v.dim(), y_dim] {
        if got != cb_x.dim() {
            return Err(Error::DimensionMismatch {
                expected: cb_x.dim(),
                got,
            });
        }
    }
    Ok(())
}

struct ShiftedCodebooks {
    x: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl ShiftedCodebooks {
    fn new(cb_x: &Codebook, cb_v: &Codebook, gp: &GainPair) -> Self {
        let shift = |cb: &Codebook, g: f64| -> Vec<Vec<f64>> {
            cb.codevectors
                .iter()
                .map(|c| c.iter().map(|x| x + g).collect())
                .collect()
        };
        Self {
            x: shift(cb_x, gp.log10_gx),
            v: shift(cb_v, gp.log10_gv),
        }
    }

    /// Exhaustive K² search; ties go to the smallest `index_x`, then `index_v`.
    fn decode(&self, y: &[f64]) -> VqMatch {
        let mut best = VqMatch {
            index_x: 0,
            index_v: 0,
            cost: f64::INFINITY,
        };
        for (i, cx) in self.x.iter().enumerate() {
            for (j, cv) in self.v.iter().enumerate() {
                // partial sums only grow, so abandoning at >= best never drops a strict improvement
                let mut acc = 0.0;
                for ((&yd, &a), &b) in y.iter().zip(cx).zip(cv) {
                    let e = yd - a.max(b);
                    acc += e * e;
                    if acc >= best.cost {
                        break;
                    }
                }
                if acc < best.cost {
                    best = VqMatch {
                        index_x: i,
                        index_v: j,
                        cost: acc,
                    };
                }
            }
        }
        best
    }
}

pub fn gvq_frame_decode(y: &[f64], cb_x: &Codebook, cb_v: &Codebook, theta: f64, ctx: &GainContext) -> Result<VqMatch> {
    check_dims(y.len(), cb_x, cb_v)?;
    let gp = gains_from_theta(theta, ctx);
    Ok(ShiftedCodebooks::new(cb_x, cb_v, &gp).decode(y))
}

/// Per-frame decoded codevector indices and the sequence score
/// `Q(θ) = −Σ_r e^r`.
#[derive(Debug, Clone, PartialEq)]
pub struct VqScore {
    pub index_x: Vec<usize>,
    pub index_v: Vec<usize>,
    pub score: f64,
}

pub fn gvq_score<Y: AsRef<[f64]>>(
    y_seq: &[Y],
    cb_x: &Codebook,
    cb_v: &Codebook,
    theta: f64,
    ctx: &GainContext,
) -> Result<VqScore> {
    let thetas = vec![theta; y_seq.len()];
    gvq_score_per_frame(y_seq, cb_x, cb_v, &thetas, ctx)
}

/// [`gvq_score`] with an individual θ for every frame.
pub fn gvq_score_per_frame<Y: AsRef<[f64]>>(
    y_seq: &[Y],
    cb_x: &Codebook,
    cb_v: &Codebook,
    thetas: &[f64],
    ctx: &GainContext,
) -> Result<VqScore> {
    if y_seq.is_empty() {
        return Err(Error::EmptyInput);
    }
    assert_eq!(thetas.len(), y_seq.len());
    for y in y_seq {
        check_dims(y.as_ref().len(), cb_x, cb_v)?;
    }
    let mut out = VqScore {
        index_x: Vec::with_capacity(y_seq.len()),
        index_v: Vec::with_capacity(y_seq.len()),
        score: 0.0,
    };
    let mut shifted: Option<(f64, ShiftedCodebooks)> = None;
    let mut total = 0.0;
    for (y, &theta) in y_seq.iter().zip(thetas) {
        if shifted.as_ref().is_none_or(|(t, _)| *t != theta) {
            let gp = gains_from_theta(theta, ctx);
            shifted = Some((theta, ShiftedCodebooks::new(cb_x, cb_v, &gp)));
        }
        let m = shifted.as_ref().unwrap().1.decode(y.as_ref());
        out.index_x.push(m.index_x);
        out.index_v.push(m.index_v);
        total += m.cost;
    }
    out.score = -total;
    Ok(out)
}

/// `Q(θ)` with the codevector indices held fixed.
pub fn gvq_fixed_score<Y: AsRef<[f64]>>(
    y_seq: &[Y],
    index_x: &[usize],
    index_v: &[usize],
    cb_x: &Codebook,
    cb_v: &Codebook,
    theta: f64,
    ctx: &GainContext,
) -> Result<f64> {
    let gp = gains_from_theta(theta, ctx);
    let mut total = 0.0;
    for (r, y) in y_seq.iter().enumerate() {
        let (i, j) = (index_x[r], index_v[r]);
        for (idx, k) in [(i, cb_x.k()), (j, cb_v.k())] {
            if idx >= k {
                return Err(Error::InvalidPath {
                    frame: r,
                    index: idx,
                    k,
                });
            }
        }
        total += pair_cost(y.as_ref(), &cb_x.codevectors[i], &cb_v.codevectors[j], &gp);
    }
    Ok(-total)
}
