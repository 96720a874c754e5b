//! 16-bit PCM mono WAV I/O.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioSignal;
use crate::{Error, Result};

const FULL_SCALE: f64 = 32768.0;

/// Reads a 16-bit mono PCM file, scaling samples to [-1, 1). When
/// `expected_rate` is given, any other rate is an error; no resampling is
/// performed.
pub fn read_wav(path: impl AsRef<Path>, expected_rate: Option<u32>) -> Result<AudioSignal> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::NotMono(spec.channels));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{:?} {}-bit (only 16-bit integer PCM is supported)",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if let Some(rate) = expected_rate {
        if rate != spec.sample_rate {
            return Err(Error::SampleRateMismatch {
                expected: rate,
                got: spec.sample_rate,
            });
        }
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / FULL_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(AudioSignal::new(samples, spec.sample_rate))
}

/// Writes a 16-bit mono PCM file. Samples are clipped to [-1, 1] first.
pub fn write_wav(path: impl AsRef<Path>, signal: &AudioSignal) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for &s in &signal.samples {
        let q = (s.clamp(-1.0, 1.0) * FULL_SCALE).round();
        writer.write_sample(q.clamp(i16::MIN as f64, i16::MAX as f64) as i16)?;
    }
    writer.finalize()?;
    Ok(())
}
