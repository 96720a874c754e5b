//! Versioned binary model files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "GFHMMMDL"
//! 8       4     version (u32, currently 1)
//! 12      1     kind (1 = HMM, 2 = VQ)
//! 13      3     reserved, zero
//! 16      4     K (u32)
//! 20      4     dim (u32)
//! 24      4     sample_rate (u32)
//! 28      4     frame_len (u32)
//! 32      4     hop (u32)
//! 36      4     dft_size (u32)
//! 40      8     log_floor (f64)
//! 48      ...   payload
//! ```
//!
//! HMM payload: `log_pi[K]`, `log_trans[K*K]` (row-major), `mean[K][dim]`,
//! `var[K][dim]`, all f64. VQ payload: `codevectors[K][dim]`,
//! `variances[K][dim]` as f64, then `occupancy[K]` as u64.

use std::path::Path;

use super::{DiagGaussian, HmmModel};
use crate::quantize::Codebook;
use crate::signal::FramingConfig;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"GFHMMMDL";
const VERSION: u32 = 1;
const KIND_HMM: u8 = 1;
const KIND_VQ: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum SpeakerModel {
    Hmm(HmmModel),
    Vq(Codebook),
}

impl SpeakerModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SpeakerModel::Hmm(_) => "HMM",
            SpeakerModel::Vq(_) => "VQ",
        }
    }

    pub fn k(&self) -> usize {
        match self {
            SpeakerModel::Hmm(m) => m.k(),
            SpeakerModel::Vq(c) => c.k(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SpeakerModel::Hmm(m) => m.dim(),
            SpeakerModel::Vq(c) => c.dim(),
        }
    }

    pub fn as_hmm(&self) -> Result<&HmmModel> {
        match self {
            SpeakerModel::Hmm(m) => Ok(m),
            other => Err(Error::ModelKind {
                expected: "HMM",
                found: other.kind_name(),
            }),
        }
    }

    pub fn as_codebook(&self) -> Result<&Codebook> {
        match self {
            SpeakerModel::Vq(c) => Ok(c),
            other => Err(Error::ModelKind {
                expected: "VQ",
                found: other.kind_name(),
            }),
        }
    }
}

/// A speaker model together with the framing it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub framing: FramingConfig,
    pub model: SpeakerModel,
}

impl ModelFile {
    /// Fails unless the stored framing and dimension agree with `cfg`.
    pub fn check_framing(&self, cfg: &FramingConfig) -> Result<()> {
        if self.model.dim() != cfg.n_bins() {
            return Err(Error::ModelMismatch(format!(
                "model dimension {} does not match configured {} bins",
                self.model.dim(),
                cfg.n_bins()
            )));
        }
        if self.framing != *cfg {
            return Err(Error::ModelMismatch(format!(
                "model was trained with {:?}, configuration is {:?}",
                self.framing, cfg
            )));
        }
        Ok(())
    }

    pub fn into_hmm(self, cfg: &FramingConfig) -> Result<HmmModel> {
        self.check_framing(cfg)?;
        match self.model {
            SpeakerModel::Hmm(m) => Ok(m),
            other => Err(Error::ModelKind {
                expected: "HMM",
                found: other.kind_name(),
            }),
        }
    }

    pub fn into_codebook(self, cfg: &FramingConfig) -> Result<Codebook> {
        self.check_framing(cfg)?;
        match self.model {
            SpeakerModel::Vq(c) => Ok(c),
            other => Err(Error::ModelKind {
                expected: "VQ",
                found: other.kind_name(),
            }),
        }
    }
}

pub fn save_model(file: &ModelFile, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode(file)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    decode(&std::fs::read(path)?)
}

fn u32_field(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::ModelFormat(format!("{what} = {v} does not fit in u32")))
}

fn encode(file: &ModelFile) -> Result<Vec<u8>> {
    let m = &file.model;
    let (k, dim) = (m.k(), m.dim());
    let f = &file.framing;
    let mut out = Vec::with_capacity(48 + 8 * (k * k + 3 * k * dim));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match m {
        SpeakerModel::Hmm(_) => KIND_HMM,
        SpeakerModel::Vq(_) => KIND_VQ,
    });
    out.extend_from_slice(&[0, 0, 0]);
    for (v, what) in [
        (k, "K"),
        (dim, "dim"),
        (f.sample_rate as usize, "sample_rate"),
        (f.frame_len, "frame_len"),
        (f.hop, "hop"),
        (f.dft_size, "dft_size"),
    ] {
        out.extend_from_slice(&u32_field(v, what)?.to_le_bytes());
    }
    out.extend_from_slice(&f.log_floor.to_le_bytes());

    let mut put = |xs: &[f64]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    match m {
        SpeakerModel::Hmm(h) => {
            put(&h.log_pi);
            put(&h.log_trans);
            h.states.iter().for_each(|s| put(&s.mean));
            h.states.iter().for_each(|s| put(&s.var));
        }
        SpeakerModel::Vq(c) => {
            c.codevectors.iter().for_each(|v| put(v));
            c.variances.iter().for_each(|v| put(v));
            for &n in &c.occupancy {
                out.extend_from_slice(&n.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::ModelFormat("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

fn decode(buf: &[u8]) -> Result<ModelFile> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::ModelFormat("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let kind = r.take(4)?[0];
    let k = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let framing = FramingConfig {
        sample_rate: r.u32()?,
        frame_len: r.u32()? as usize,
        hop: r.u32()? as usize,
        dft_size: r.u32()? as usize,
        log_floor: r.f64()?,
    };
    if k == 0 || dim == 0 {
        return Err(Error::ModelFormat(format!("K = {k}, dim = {dim}")));
    }
    let model = match kind {
        KIND_HMM => {
            let log_pi = r.f64s(k)?;
            let log_trans = r.f64s(k * k)?;
            let means: Vec<Vec<f64>> = (0..k).map(|_| r.f64s(dim)).collect::<Result<_>>()?;
            let vars: Vec<Vec<f64>> = (0..k).map(|_| r.f64s(dim)).collect::<Result<_>>()?;
            let states = means
                .into_iter()
                .zip(vars)
                .map(|(mean, var)| DiagGaussian { mean, var })
                .collect();
            let h = HmmModel {
                log_pi,
                log_trans,
                states,
            };
            h.validate()?;
            SpeakerModel::Hmm(h)
        }
        KIND_VQ => {
            let codevectors = (0..k).map(|_| r.f64s(dim)).collect::<Result<_>>()?;
            let variances = (0..k).map(|_| r.f64s(dim)).collect::<Result<_>>()?;
            let occupancy = (0..k).map(|_| r.u64()).collect::<Result<_>>()?;
            SpeakerModel::Vq(Codebook {
                codevectors,
                variances,
                occupancy,
            })
        }
        other => return Err(Error::ModelFormat(format!("unknown model kind {other}"))),
    };
    if r.pos != buf.len() {
        return Err(Error::ModelFormat("trailing bytes".into()));
    }
    Ok(ModelFile { framing, model })
}
