//! Mixture fabrication at a controlled TIR, SNR scoring, synthetic sources
//! and the batch experiment harness.

mod experiment;
mod synth;

pub use experiment::{
    read_results, run_experiment, summarize, write_results, write_summary, Manifest, PairSpec, ResultRow, SourceSpec,
    SpeakerSpec, Summary, SummaryRow,
};
pub use synth::{speaker_generator, synth_source, SynthKind, GENERATOR_STATES};

use crate::gain::normalize_rms;
use crate::signal::AudioSignal;
use crate::{Error, Result};

/// Cap applied by [`snr`] when the residual is negligible.
pub const SNR_CAP_DB: f64 = 100.0;

/// Scales both signals to unit RMS.
pub fn normalize_equal_power(x: &AudioSignal, v: &AudioSignal) -> Result<(AudioSignal, AudioSignal)> {
    Ok((normalize_rms(x)?, normalize_rms(v)?))
}

/// A mixture and its scaled components, `y = g_x·x + g_v·v`.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub mixture: AudioSignal,
    pub target: AudioSignal,
    pub interference: AudioSignal,
    pub gx: f64,
    pub gv: f64,
}

/// Linear gains for a TIR of `theta` dB with `g_x² + g_v² = 1`.
pub fn tir_gains(theta: f64) -> (f64, f64) {
    (
        (1.0 + 10f64.powf(-theta / 10.0)).powf(-0.5),
        (1.0 + 10f64.powf(theta / 10.0)).powf(-0.5),
    )
}

/// Mixes two unit-RMS sources at `theta` dB, trimming to the shorter one.
pub fn mix_at_tir(x: &AudioSignal, v: &AudioSignal, theta: f64) -> Result<Mixture> {
    if x.sample_rate != v.sample_rate {
        return Err(Error::SampleRateMismatch {
            expected: x.sample_rate,
            got: v.sample_rate,
        });
    }
    let n = x.len().min(v.len());
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let (gx, gv) = tir_gains(theta);
    let target: Vec<f64> = x.samples[..n].iter().map(|s| gx * s).collect();
    let interference: Vec<f64> = v.samples[..n].iter().map(|s| gv * s).collect();
    let mixture = target.iter().zip(&interference).map(|(a, b)| a + b).collect();
    let rate = x.sample_rate;
    Ok(Mixture {
        mixture: AudioSignal::new(mixture, rate),
        target: AudioSignal::new(target, rate),
        interference: AudioSignal::new(interference, rate),
        gx,
        gv,
    })
}

/// `10·log10(Σz² / Σ(z − ẑ)²)` over the common length, capped at
/// [`SNR_CAP_DB`].
pub fn snr(reference: &AudioSignal, estimate: &AudioSignal) -> Result<f64> {
    let n = reference.len().min(estimate.len());
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let p_ref: f64 = reference.samples[..n].iter().map(|s| s * s).sum();
    if p_ref == 0.0 {
        return Err(Error::Silent);
    }
    let p_err: f64 = reference.samples[..n]
        .iter()
        .zip(&estimate.samples[..n])
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if p_err < 1e-10 * p_ref {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (p_ref / p_err).log10()).min(SNR_CAP_DB))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64, scale: f64) -> AudioSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioSignal::new(
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect(),
            8000,
        )
    }

    fn rms(s: &AudioSignal) -> f64 {
        (s.samples.iter().map(|x| x * x).sum::<f64>() / s.len() as f64).sqrt()
    }

    #[test]
    fn equal_power() {
        let (x, v) = normalize_equal_power(&noise(1000, 1, 2.0), &noise(900, 2, 0.3)).unwrap();
        assert!((rms(&x) - 1.0).abs() < 1e-9);
        assert!((rms(&v) - 1.0).abs() < 1e-9);
        let (x2, _) = normalize_equal_power(&x, &v).unwrap();
        for (a, b) in x.samples.iter().zip(&x2.samples) {
            assert!((a - b).abs() < 1e-12);
        }
        let c = AudioSignal::new(vec![2.0; 10], 8000);
        let (h, _) = normalize_equal_power(&c, &v).unwrap();
        assert!(h.samples.iter().all(|&s| (s - 1.0).abs() < 1e-12));
        assert!(normalize_equal_power(&AudioSignal::new(vec![0.0; 4], 8000), &v).is_err());
    }

    #[test]
    fn mixing() {
        let (x, v) = normalize_equal_power(&noise(20000, 3, 1.0), &noise(24000, 4, 1.0)).unwrap();
        let m = mix_at_tir(&x, &v, 0.0).unwrap();
        assert_eq!(m.mixture.len(), 20000);
        for t in 0..100 {
            let expect = (x.samples[t] + v.samples[t]) / 2f64.sqrt();
            assert!((m.mixture.samples[t] - expect).abs() < 1e-12);
        }
        let m = mix_at_tir(&x, &v, 15.0).unwrap();
        assert!((20.0 * (m.gx / m.gv).log10() - 15.0).abs() < 1e-12);
        for theta in [-6.0, 3.0, 9.0] {
            let m = mix_at_tir(&x, &v, theta).unwrap();
            let pt: f64 = m.target.samples.iter().map(|s| s * s).sum();
            let pi: f64 = m.interference.samples.iter().map(|s| s * s).sum();
            assert!((10.0 * (pt / pi).log10() - theta).abs() < 0.05);
        }
        assert!(mix_at_tir(&x, &AudioSignal::new(vec![], 8000), 0.0).is_err());
    }

    #[test]
    fn snr_cases() {
        let z = noise(8000, 5, 1.0);
        assert_eq!(snr(&z, &z).unwrap(), SNR_CAP_DB);
        let zero = AudioSignal::new(vec![0.0; 8000], 8000);
        assert!(snr(&z, &zero).unwrap().abs() < 1e-12);
        let pz: f64 = z.samples.iter().map(|s| s * s).sum::<f64>() / 8000.0;
        let n = noise(8000, 6, 1.0);
        let pn: f64 = n.samples.iter().map(|s| s * s).sum::<f64>() / 8000.0;
        let k = (0.01 * pz / pn).sqrt();
        let est = AudioSignal::new(z.samples.iter().zip(&n.samples).map(|(a, b)| a + k * b).collect(), 8000);
        assert!((snr(&z, &est).unwrap() - 20.0).abs() < 0.1);
        assert!(matches!(snr(&zero, &z), Err(Error::Silent)));
    }

    proptest! {
        #[test]
        fn snr_of_scaled_copy(delta in prop_oneof![-0.5f64..-1e-3, 1e-3f64..0.5]) {
            let z = noise(512, 7, 1.0);
            let est = z.scaled(1.0 + delta);
            prop_assert!((snr(&z, &est).unwrap() - 20.0 * (1.0 / delta.abs()).log10()).abs() < 0.01);
        }

        #[test]
        fn gain_identities(theta in -15.0f64..15.0) {
            let (gx, gv) = tir_gains(theta);
            prop_assert!((gx * gx + gv * gv - 1.0).abs() < 1e-12);
            prop_assert!((10.0 * (gx * gx / (gv * gv)).log10() - theta).abs() < 1e-9);
        }
    }
}
