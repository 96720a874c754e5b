//! Scaled forward-backward EM over multiple utterances.

use rayon::prelude::*;

use super::{HmmModel, HALF_LN_2PI, VARIANCE_FLOOR};
use crate::{Error, Result};

/// Stops when `|ΔLL| < rel_tol·|LL|` or after `max_iters` re-estimations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaumWelchConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub var_floor: f64,
}

impl Default for BaumWelchConfig {
    fn default() -> Self {
        Self {
            max_iters: 15,
            rel_tol: 1e-5,
            var_floor: VARIANCE_FLOOR,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedHmm {
    pub model: HmmModel,
    /// Total log-likelihood of the initial model followed by the value after
    /// each re-estimation.
    pub ll_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Stats {
    ll: f64,
    first: Vec<f64>,
    occ: Vec<f64>,
    xi: Vec<f64>,
    sum_x: Vec<f64>,
    sum_xx: Vec<f64>,
}

impl Stats {
    fn zeros(k: usize, dim: usize) -> Self {
        Self {
            ll: 0.0,
            first: vec![0.0; k],
            occ: vec![0.0; k],
            xi: vec![0.0; k * k],
            sum_x: vec![0.0; k * dim],
            sum_xx: vec![0.0; k * dim],
        }
    }

    fn add(&mut self, other: &Stats) {
        self.ll += other.ll;
        let pairs = [
            (&mut self.first, &other.first),
            (&mut self.occ, &other.occ),
            (&mut self.xi, &other.xi),
            (&mut self.sum_x, &other.sum_x),
            (&mut self.sum_xx, &other.sum_xx),
        ];
        for (a, b) in pairs {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

pub fn baum_welch<F>(utterances: &[Vec<F>], init: &HmmModel, cfg: &BaumWelchConfig) -> Result<TrainedHmm>
where
    F: AsRef<[f64]> + Sync,
{
    init.validate()?;
    let utterances: Vec<&Vec<F>> = utterances.iter().filter(|u| !u.is_empty()).collect();
    if utterances.is_empty() {
        return Err(Error::EmptyInput);
    }
    let dim = init.dim();
    for u in &utterances {
        for f in u.iter() {
            if f.as_ref().len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: f.as_ref().len(),
                });
            }
        }
    }

    let mut model = init.clone();
    let mut stats = e_step(&utterances, &model)?;
    let mut ll_trace = vec![stats.ll];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        model = m_step(&model, &stats, utterances.len(), cfg.var_floor);
        iterations += 1;
        let prev = stats.ll;
        stats = e_step(&utterances, &model)?;
        ll_trace.push(stats.ll);
        if (stats.ll - prev).abs() < cfg.rel_tol * prev.abs() {
            converged = true;
            break;
        }
    }
    Ok(TrainedHmm {
        model,
        ll_trace,
        iterations,
        converged,
    })
}

fn e_step<F>(utterances: &[&Vec<F>], model: &HmmModel) -> Result<Stats>
where
    F: AsRef<[f64]> + Sync,
{
    let per_utt: Vec<Result<Stats>> = utterances.par_iter().map(|u| forward_backward(u, model)).collect();
    let mut total = Stats::zeros(model.k(), model.dim());
    for s in per_utt {
        total.add(&s?);
    }
    Ok(total)
}

fn forward_backward<F: AsRef<[f64]>>(frames: &[F], model: &HmmModel) -> Result<Stats> {
    let k = model.k();
    let dim = model.dim();
    let t_len = frames.len();
    let trans: Vec<f64> = model.log_trans.iter().map(|l| l.exp()).collect();
    let sd: Vec<Vec<f64>> = model
        .states
        .iter()
        .map(|s| s.var.iter().map(|v| v.sqrt()).collect())
        .collect();
    let ln_sd: Vec<Vec<f64>> = sd.iter().map(|s| s.iter().map(|x| x.ln()).collect()).collect();

    // emissions rescaled per frame by their maximum
    let mut b = vec![0.0; t_len * k];
    let mut log_shift = 0.0;
    for (t, f) in frames.iter().enumerate() {
        let x = f.as_ref();
        let row = &mut b[t * k..(t + 1) * k];
        for (j, out) in row.iter_mut().enumerate() {
            let s = &model.states[j];
            let mut acc = 0.0;
            for d in 0..dim {
                let z = (x[d] - s.mean[d]) / sd[j][d];
                acc += -0.5 * z * z - ln_sd[j][d] - HALF_LN_2PI;
            }
            *out = acc;
        }
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::Numerical(format!(
                "emission log-likelihood not finite at frame {t}"
            )));
        }
        row.iter_mut().for_each(|v| *v = (*v - m).exp());
        log_shift += m;
    }

    let mut alpha = vec![0.0; t_len * k];
    let mut scale = vec![0.0; t_len];
    for t in 0..t_len {
        for j in 0..k {
            let pred = if t == 0 {
                model.log_pi[j].exp()
            } else {
                (0..k).map(|i| alpha[(t - 1) * k + i] * trans[i * k + j]).sum()
            };
            alpha[t * k + j] = pred * b[t * k + j];
        }
        let c: f64 = alpha[t * k..(t + 1) * k].iter().sum();
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Numerical(format!("forward recursion underflow at frame {t}")));
        }
        alpha[t * k..(t + 1) * k].iter_mut().for_each(|a| *a /= c);
        scale[t] = c;
    }

    let mut beta = vec![1.0; t_len * k];
    for t in (0..t_len.saturating_sub(1)).rev() {
        for i in 0..k {
            let mut acc = 0.0;
            for j in 0..k {
                acc += trans[i * k + j] * b[(t + 1) * k + j] * beta[(t + 1) * k + j];
            }
            beta[t * k + i] = acc / scale[t + 1];
        }
    }

    let mut st = Stats::zeros(k, dim);
    st.ll = scale.iter().map(|c| c.ln()).sum::<f64>() + log_shift;
    for t in 0..t_len {
        let x = frames[t].as_ref();
        for j in 0..k {
            let g = alpha[t * k + j] * beta[t * k + j];
            if t == 0 {
                st.first[j] += g;
            }
            st.occ[j] += g;
            for d in 0..dim {
                st.sum_x[j * dim + d] += g * x[d];
                st.sum_xx[j * dim + d] += g * x[d] * x[d];
            }
        }
        if t + 1 < t_len {
            for i in 0..k {
                let ai = alpha[t * k + i];
                for j in 0..k {
                    st.xi[i * k + j] +=
                        ai * trans[i * k + j] * b[(t + 1) * k + j] * beta[(t + 1) * k + j] / scale[t + 1];
                }
            }
        }
    }
    Ok(st)
}

fn m_step(prev: &HmmModel, st: &Stats, n_utt: usize, var_floor: f64) -> HmmModel {
    let k = prev.k();
    let dim = prev.dim();
    let mut model = prev.clone();

    let pi_total: f64 = st.first.iter().sum();
    debug_assert!((pi_total - n_utt as f64).abs() < 1e-6 * n_utt as f64);
    for j in 0..k {
        model.log_pi[j] = (st.first[j] / pi_total).ln();
    }

    for i in 0..k {
        let row = &st.xi[i * k..(i + 1) * k];
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            for j in 0..k {
                model.log_trans[i * k + j] = (row[j] / total).ln();
            }
        }
    }

    for j in 0..k {
        let occ = st.occ[j];
        if occ < 1e-10 {
            continue;
        }
        let s = &mut model.states[j];
        for d in 0..dim {
            let mean = st.sum_x[j * dim + d] / occ;
            let var = st.sum_xx[j * dim + d] / occ - mean * mean;
            s.mean[d] = mean;
            s.var[d] = var.max(var_floor);
        }
    }
    model
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::DiagGaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state_truth() -> HmmModel {
        HmmModel::from_probs(
            &[0.6, 0.4],
            &[0.9, 0.1, 0.15, 0.85],
            vec![
                DiagGaussian::new(vec![0.0, 1.0, -1.0], vec![0.25, 0.25, 0.25]).unwrap(),
                DiagGaussian::new(vec![2.0, -1.0, 1.5], vec![0.3, 0.2, 0.4]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_state_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth = two_state_truth();
        let utts: Vec<Vec<Vec<f64>>> = (0..3).map(|_| truth.sample(&mut rng, 40).1).collect();
        let init = HmmModel::from_probs(
            &[1.0],
            &[1.0],
            vec![DiagGaussian::new(vec![0.0; 3], vec![1.0; 3]).unwrap()],
        )
        .unwrap();
        let out = baum_welch(&utts, &init, &BaumWelchConfig::default()).unwrap();

        // independent closed form: pooled sample mean / variance
        let all: Vec<&Vec<f64>> = utts.iter().flatten().collect();
        let n = all.len() as f64;
        let mut ll = 0.0;
        for d in 0..3 {
            let mean = all.iter().map(|x| x[d]).sum::<f64>() / n;
            let var = all.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / n;
            assert!((out.model.states[0].mean[d] - mean).abs() < 1e-10);
            assert!((out.model.states[0].var[d] - var).abs() < 1e-10);
            ll += -0.5 * n * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * n;
        }
        assert!((out.ll_trace[1] - ll).abs() < 1e-8 * ll.abs());
        assert!(out.converged);
        assert_eq!(out.iterations, 2);
    }

    #[test]
    fn recovers_two_state_means() {
        let truth = two_state_truth();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (_, obs) = truth.sample(&mut rng, 2000);
        let mut init = truth.clone();
        for s in &mut init.states {
            s.mean.iter_mut().for_each(|m| *m += 0.3);
            s.var.iter_mut().for_each(|v| *v = 1.0);
        }
        let out = baum_welch(&[obs], &init, &BaumWelchConfig::default()).unwrap();
        for (a, b) in out.model.states.iter().zip(&truth.states) {
            for (x, y) in a.mean.iter().zip(&b.mean) {
                assert!((x - y).abs() < 0.1, "{x} vs {y}");
            }
        }
        for w in out.ll_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-6);
        }
        assert!(out.model.validate().is_ok());
    }

    #[test]
    fn empty_training_set() {
        let init = two_state_truth();
        let empty: Vec<Vec<Vec<f64>>> = vec![];
        assert!(matches!(
            baum_welch(&empty, &init, &BaumWelchConfig::default()),
            Err(Error::EmptyInput)
        ));
        assert!(baum_welch(&[Vec::<Vec<f64>>::new()], &init, &BaumWelchConfig::default()).is_err());
    }

    #[test]
    fn no_underflow_on_long_high_dim_sequences() {
        let mut states = Vec::new();
        for j in 0..4 {
            states.push(DiagGaussian::new(vec![j as f64; 129], vec![0.01; 129]).unwrap());
        }
        let truth = HmmModel::from_probs(&[0.25; 4], &[0.25; 16], states).unwrap();
        let (_, obs) = truth.sample(&mut ChaCha8Rng::seed_from_u64(2), 3000);
        let cfg = BaumWelchConfig {
            max_iters: 2,
            ..Default::default()
        };
        let out = baum_welch(&[obs], &truth, &cfg).unwrap();
        assert!(out.ll_trace.iter().all(|l| l.is_finite()));
    }
}
