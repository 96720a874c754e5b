//! Batch experiments: every (pair, θ, method) combination is mixed,
//! separated and scored, one CSV row per run.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synth::{synth_source, SynthKind};
use super::{mix_at_tir, normalize_equal_power, snr};
use crate::decode::InferConfig;
use crate::models::{load_model, ModelFile, SpeakerModel};
use crate::separate::{separate, Method, SeparateOptions};
use crate::signal::{read_wav, AudioSignal, FramingConfig};
use crate::{Error, Result};

fn default_thetas() -> Vec<f64> {
    vec![0.0, 3.0, 6.0, 9.0, 12.0, 15.0]
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_duration() -> f64 {
    1.5
}

/// Experiment description, read from TOML. Relative paths are resolved
/// against the manifest's directory.
///
/// ```toml
/// seed = 1
/// thetas = [0, 3, 6, 9, 12, 15]
/// methods = ["gfhmm", "gvq", "fhmm", "vq"]
/// jobs = 4
///
/// [[speakers]]
/// name = "a"
/// hmm = "a.hmm"
/// vq = "a.vq"
///
/// [[pairs]]
/// id = "p1"
/// target_speaker = "a"
/// interf_speaker = "b"
/// target = { wav = "a_test.wav" }
/// interf = { synth = "hmm_sample", model = "gen_b.hmm", seed = 3, duration = 1.5 }
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_thetas")]
    pub thetas: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub jobs: Option<usize>,
    /// Decode the gain-adapted methods at the true θ instead of estimating it.
    #[serde(default)]
    pub oracle_theta: bool,
    #[serde(default)]
    pub framing: Option<FramingConfig>,
    #[serde(default)]
    pub infer: Option<InferSettings>,
    #[serde(default)]
    pub speakers: Vec<SpeakerSpec>,
    pub pairs: Vec<PairSpec>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferSettings {
    pub theta0: Option<f64>,
    pub outer_tol: Option<f64>,
    pub max_outer: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeakerSpec {
    pub name: String,
    pub hmm: Option<PathBuf>,
    pub vq: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub id: String,
    pub target_speaker: String,
    pub interf_speaker: String,
    pub target: SourceSpec,
    pub interf: SourceSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SourceSpec {
    Wav {
        wav: PathBuf,
    },
    Synth {
        synth: SynthKind,
        #[serde(default)]
        voice: u32,
        /// Defaults to a value derived from the manifest seed.
        seed: Option<u64>,
        #[serde(default = "default_duration")]
        duration: f64,
        /// HMM model file for `hmm_sample`.
        model: Option<PathBuf>,
    },
}

impl Manifest {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut m: Manifest = toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        m.base_dir = base_dir.into();
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::Manifest("no pairs listed".into()));
        }
        if self.thetas.is_empty() || self.methods.is_empty() {
            return Err(Error::Manifest("θ grid and method list must be non-empty".into()));
        }
        if let Some(t) = self.thetas.iter().find(|t| !t.is_finite()) {
            return Err(Error::Manifest(format!("non-finite θ {t}")));
        }
        if self.jobs == Some(0) {
            return Err(Error::Manifest("jobs must be at least 1".into()));
        }
        let mut ids: Vec<&str> = self.pairs.iter().map(|p| p.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Manifest("duplicate pair id".into()));
        }
        Ok(())
    }

    pub fn framing(&self) -> FramingConfig {
        self.framing.unwrap_or_default()
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn separate_options(&self) -> SeparateOptions {
        let mut infer = InferConfig::default();
        if let Some(s) = self.infer {
            infer.theta0 = s.theta0.unwrap_or(infer.theta0);
            infer.outer_tol = s.outer_tol.unwrap_or(infer.outer_tol);
            infer.max_outer = s.max_outer.unwrap_or(infer.max_outer);
        }
        SeparateOptions {
            infer,
            ..Default::default()
        }
    }
}

/// One run. Numeric fields are empty when the run failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub pair_id: String,
    pub method: Method,
    pub theta_true: f64,
    pub theta_hat: Option<f64>,
    pub iterations: Option<usize>,
    pub snr_target_db: Option<f64>,
    pub snr_interf_db: Option<f64>,
    pub logprob: Option<f64>,
    pub wall_ms: f64,
    pub error: String,
}

/// Means over the successful runs of one (method, θ) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub theta_true: f64,
    pub runs: usize,
    pub errors: usize,
    pub mean_snr_target_db: Option<f64>,
    pub mean_snr_interf_db: Option<f64>,
    pub mean_theta_hat: Option<f64>,
    pub mean_iterations: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Summary {
    pub rows: Vec<ResultRow>,
    pub means: Vec<SummaryRow>,
}

struct SpeakerModels {
    hmm: std::result::Result<SpeakerModel, String>,
    vq: std::result::Result<SpeakerModel, String>,
}

fn load_kind(path: Option<PathBuf>, cfg: &FramingConfig, hmm: bool) -> std::result::Result<SpeakerModel, String> {
    let path = path.ok_or_else(|| format!("no {} model listed", if hmm { "hmm" } else { "vq" }))?;
    let file: ModelFile = load_model(&path).map_err(|e| e.to_string())?;
    file.check_framing(cfg).map_err(|e| e.to_string())?;
    let checked = if hmm {
        file.model.as_hmm().map(|_| ())
    } else {
        file.model.as_codebook().map(|_| ())
    };
    checked.map_err(|e| e.to_string())?;
    Ok(file.model)
}

fn load_source(spec: &SourceSpec, manifest: &Manifest, default_seed: u64, cfg: &FramingConfig) -> Result<AudioSignal> {
    match spec {
        SourceSpec::Wav { wav } => read_wav(manifest.resolve(wav), Some(cfg.sample_rate)),
        SourceSpec::Synth {
            synth,
            voice,
            seed,
            duration,
            model,
        } => {
            let hmm = match model {
                Some(p) => Some(load_model(manifest.resolve(p))?.into_hmm(cfg)?),
                None => None,
            };
            synth_source(
                *synth,
                hmm.as_ref(),
                *voice,
                seed.unwrap_or(default_seed),
                *duration,
                cfg,
            )
        }
    }
}

fn pair_seed(base: u64, pair: usize, role: u64) -> u64 {
    base.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(2 * pair as u64 + role)
}

/// Runs the whole grid and, if `out` is given, writes the rows as CSV. Failed
/// runs are reported in the `error` column rather than aborting the batch.
pub fn run_experiment(manifest: &Manifest, out: Option<&Path>) -> Result<Summary> {
    let cfg = manifest.framing();
    cfg.validate()?;
    let opts = manifest.separate_options();

    let mut speakers: HashMap<&str, SpeakerModels> = HashMap::new();
    for s in &manifest.speakers {
        let models = SpeakerModels {
            hmm: load_kind(s.hmm.as_ref().map(|p| manifest.resolve(p)), &cfg, true),
            vq: load_kind(s.vq.as_ref().map(|p| manifest.resolve(p)), &cfg, false),
        };
        speakers.insert(s.name.as_str(), models);
    }

    let sources: Vec<std::result::Result<(AudioSignal, AudioSignal), String>> = manifest
        .pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let x = load_source(&p.target, manifest, pair_seed(manifest.seed, i, 0), &cfg);
            let v = load_source(&p.interf, manifest, pair_seed(manifest.seed, i, 1), &cfg);
            match (x, v) {
                (Ok(x), Ok(v)) => normalize_equal_power(&x, &v).map_err(|e| e.to_string()),
                (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
            }
        })
        .collect();

    let mut tasks = Vec::new();
    for p in 0..manifest.pairs.len() {
        for t in 0..manifest.thetas.len() {
            for m in 0..manifest.methods.len() {
                tasks.push((p, t, m));
            }
        }
    }

    let run = |&(p, t, m): &(usize, usize, usize)| -> ResultRow {
        let pair = &manifest.pairs[p];
        let theta = manifest.thetas[t];
        let method = manifest.methods[m];
        let start = Instant::now();
        let outcome = (|| -> std::result::Result<ResultRow, String> {
            let (x, v) = sources[p].as_ref().map_err(Clone::clone)?;
            let pick = |name: &str| -> std::result::Result<&SpeakerModel, String> {
                let s = speakers.get(name).ok_or_else(|| format!("unknown speaker {name:?}"))?;
                let r = if method.uses_hmm() { &s.hmm } else { &s.vq };
                r.as_ref().map_err(|e| format!("speaker {name:?}: {e}"))
            };
            let (mx, mv) = (pick(&pair.target_speaker)?, pick(&pair.interf_speaker)?);
            let mix = mix_at_tir(x, v, theta).map_err(|e| e.to_string())?;
            let mut o = opts;
            if manifest.oracle_theta && method.gain_adapted() {
                o.fixed_theta = Some(theta);
            }
            let sep = separate(&mix.mixture, mx, mv, &cfg, method, &o).map_err(|e| e.to_string())?;
            Ok(ResultRow {
                pair_id: pair.id.clone(),
                method,
                theta_true: theta,
                theta_hat: Some(sep.result.theta_hat),
                iterations: Some(sep.result.iterations),
                snr_target_db: Some(snr(&mix.target, &sep.target).map_err(|e| e.to_string())?),
                snr_interf_db: Some(snr(&mix.interference, &sep.interference).map_err(|e| e.to_string())?),
                logprob: Some(sep.result.logprob),
                wall_ms: 0.0,
                error: String::new(),
            })
        })();
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        match outcome {
            Ok(row) => ResultRow { wall_ms, ..row },
            Err(error) => ResultRow {
                pair_id: pair.id.clone(),
                method,
                theta_true: theta,
                theta_hat: None,
                iterations: None,
                snr_target_db: None,
                snr_interf_db: None,
                logprob: None,
                wall_ms,
                error,
            },
        }
    };

    let rows: Vec<ResultRow> = match manifest.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(|| tasks.par_iter().map(run).collect()),
        None => tasks.par_iter().map(run).collect(),
    };
    // par_iter().collect() keeps task order, which is already (pair, θ, method)

    if let Some(path) = out {
        write_results(path, &rows)?;
    }
    let means = summarize(&rows);
    Ok(Summary { rows, means })
}

pub fn write_results(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_summary(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-(method, θ) means. Methods keep their order of first appearance; θ is
/// ascending within each method.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut methods: Vec<Method> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let mut out = Vec::new();
    for m in methods {
        let mut thetas: Vec<f64> = rows.iter().filter(|r| r.method == m).map(|r| r.theta_true).collect();
        thetas.sort_by(f64::total_cmp);
        thetas.dedup();
        for theta in thetas {
            let cell: Vec<&ResultRow> = rows.iter().filter(|r| r.method == m && r.theta_true == theta).collect();
            let ok: Vec<&&ResultRow> = cell.iter().filter(|r| r.error.is_empty()).collect();
            out.push(SummaryRow {
                method: m,
                theta_true: theta,
                runs: cell.len(),
                errors: cell.len() - ok.len(),
                mean_snr_target_db: mean(ok.iter().filter_map(|r| r.snr_target_db)),
                mean_snr_interf_db: mean(ok.iter().filter_map(|r| r.snr_interf_db)),
                mean_theta_hat: mean(ok.iter().filter_map(|r| r.theta_hat)),
                mean_iterations: mean(ok.iter().filter_map(|r| r.iterations.map(|i| i as f64))),
            });
        }
    }
    out
}
