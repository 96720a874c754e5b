//! `gfhmm` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O error, 3 model mismatch,
//! 4 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gfhmm::decode::InferConfig;
use gfhmm::error::ErrorCategory;
use gfhmm::eval::{
    mix_at_tir, normalize_equal_power, read_results, run_experiment, speaker_generator, summarize, synth_source,
    write_summary, Manifest, SynthKind,
};
use gfhmm::models::{
    baum_welch, init_hmm_from_codebook, load_model, save_model, BaumWelchConfig, ModelFile, SpeakerModel,
};
use gfhmm::quantize::{train_lbg, LbgConfig};
use gfhmm::separate::{separate, Method, SeparateOptions};
use gfhmm::signal::{read_wav, write_wav, AudioSignal, FramingConfig, Stft};
use gfhmm::{gain, Error};
use serde::Deserialize;

#[derive(Parser, Debug)]
#[command(
    name = "gfhmm",
    version,
    about = "Gain-adapted single-channel two-speaker separation"
)]
struct Cli {
    /// Seed for commands that draw random numbers (synth, evaluate).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// TOML file with defaults for train, separate and evaluate; flags given
    /// on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a VQ codebook or an HMM from a directory of mono 8 kHz WAV files.
    Train(TrainArgs),
    /// Mix a target and an interferer at a given target-to-interference ratio.
    Mix(MixArgs),
    /// Separate a two-speaker mixture.
    Separate(SeparateArgs),
    /// Run a batch experiment described by a TOML manifest.
    Evaluate(EvaluateArgs),
    /// Aggregate experiment results into per-method curves.
    Report(ReportArgs),
    /// Render a synthetic source to WAV.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelKindArg {
    Vq,
    Hmm,
}

#[derive(clap::Args, Debug)]
struct TrainArgs {
    /// Model type to train.
    #[arg(long, value_enum)]
    kind: ModelKindArg,
    /// Directory holding the speaker's training WAV files.
    #[arg(long)]
    speaker_dir: PathBuf,
    /// Number of states / codevectors, a power of two [default: 64].
    #[arg(long)]
    states: Option<usize>,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Maximum Baum-Welch iterations [default: 15].
    #[arg(long)]
    max_iters: Option<usize>,
    /// Baum-Welch relative log-likelihood tolerance [default: 1e-5].
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(clap::Args, Debug)]
struct MixArgs {
    /// Target speaker WAV.
    #[arg(long)]
    target: PathBuf,
    /// Interfering speaker WAV.
    #[arg(long)]
    interf: PathBuf,
    /// Target-to-interference ratio in dB.
    #[arg(long, allow_hyphen_values = true)]
    tir: f64,
    /// Output mixture WAV.
    #[arg(long)]
    out: PathBuf,
    /// Scaled target component (default: <out stem>_target.wav).
    #[arg(long)]
    out_target: Option<PathBuf>,
    /// Scaled interference component (default: <out stem>_interf.wav).
    #[arg(long)]
    out_interf: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Gfhmm,
    Gvq,
    Fhmm,
    Vq,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Gfhmm => Method::Gfhmm,
            MethodArg::Gvq => Method::Gvq,
            MethodArg::Fhmm => Method::Fhmm,
            MethodArg::Vq => Method::Vq,
        }
    }
}

#[derive(clap::Args, Debug)]
struct SeparateArgs {
    /// Mixture WAV.
    #[arg(long)]
    mixture: PathBuf,
    /// Target speaker model.
    #[arg(long)]
    model_x: PathBuf,
    /// Interfering speaker model.
    #[arg(long)]
    model_v: PathBuf,
    /// Separation method; hmm models for gfhmm/fhmm, vq models for gvq/vq
    /// [default: gfhmm].
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Estimated target WAV.
    #[arg(long)]
    out_x: PathBuf,
    /// Estimated interference WAV.
    #[arg(long)]
    out_v: PathBuf,
    /// Initial θ in dB for the gain search [default: 0].
    #[arg(long, allow_hyphen_values = true)]
    theta0: Option<f64>,
    /// Decode at this θ (dB) instead of estimating it.
    #[arg(long, allow_hyphen_values = true)]
    fix_theta: Option<f64>,
    /// Treat the mixture as having unit source gains at θ = 0, as the fhmm and
    /// vq baselines do.
    #[arg(long)]
    unit_gains: bool,
    /// Outer-loop stopping tolerance on θ in dB [default: 0.25].
    #[arg(long)]
    outer_tol: Option<f64>,
    /// Maximum outer iterations [default: 10].
    #[arg(long)]
    max_outer: Option<usize>,
    /// JSON diagnostics file (default: <out-x stem>.json).
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct EvaluateArgs {
    /// Experiment manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    /// Output CSV, one row per (pair, θ, method).
    #[arg(long)]
    out: PathBuf,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(clap::Args, Debug)]
struct ReportArgs {
    /// Results CSV written by `evaluate`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output CSV with mean SNR and mean θ̂ per (method, θ).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SynthKindArg {
    HmmSample,
    Tonal,
    FilteredNoise,
}

#[derive(clap::Args, Debug)]
struct SynthArgs {
    /// Source type.
    #[arg(long, value_enum)]
    kind: SynthKindArg,
    /// Voice index; for hmm_sample without --model it picks a built-in
    /// synthetic speaker.
    #[arg(long, default_value_t = 0)]
    voice: u32,
    /// HMM to sample from (hmm_sample only).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Length in seconds.
    #[arg(long, default_value_t = 1.5)]
    duration: f64,
    /// Output WAV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    train: TrainDefaults,
    separate: SeparateDefaults,
    evaluate: EvaluateDefaults,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainDefaults {
    states: Option<usize>,
    max_iters: Option<usize>,
    tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SeparateDefaults {
    method: Option<Method>,
    theta0: Option<f64>,
    outer_tol: Option<f64>,
    max_outer: Option<usize>,
    unit_gains: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvaluateDefaults {
    jobs: Option<usize>,
}

impl Config {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()).into());
        }
        let text = std::fs::read_to_string(path).map_err(Error::from)?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e.category() {
                ErrorCategory::Usage => 1,
                ErrorCategory::Io => 2,
                ErrorCategory::Model => 3,
                ErrorCategory::Numeric => 4,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Train(a) => cmd_train(a, &config.train),
        Command::Mix(a) => cmd_mix(a),
        Command::Separate(a) => cmd_separate(a, &config.separate),
        Command::Evaluate(a) => cmd_evaluate(a, cli.seed, &config.evaluate),
        Command::Report(a) => cmd_report(a),
        Command::Synth(a) => cmd_synth(a, cli.seed.unwrap_or(0)),
    }
}

fn wav_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()).into());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(Error::from)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::MissingFile(dir.join("*.wav")).into());
    }
    Ok(files)
}

fn cmd_train(a: TrainArgs, defaults: &TrainDefaults) -> CliResult {
    let states = a.states.or(defaults.states).unwrap_or(64);
    if states == 0 || !states.is_power_of_two() {
        return Err(CliError::Usage(format!(
            "--states must be a power of two, got {states}"
        )));
    }
    let framing = FramingConfig::default();
    let stft = Stft::new(framing)?;
    let mut utterances = Vec::new();
    for path in wav_files(&a.speaker_dir)? {
        let sig = gain::normalize_rms(&read_wav(&path, Some(framing.sample_rate))?)?;
        utterances.push(stft.analyze(&sig)?);
    }
    let frames = utterances.iter().map(Vec::len).sum::<usize>();
    println!("{} files, {frames} frames", utterances.len());
    let pooled: Vec<&[f64]> = utterances.iter().flatten().map(|f| f.values.as_slice()).collect();
    let codebook = train_lbg(&pooled, &LbgConfig::with_k(states))?;
    let model = match a.kind {
        ModelKindArg::Vq => SpeakerModel::Vq(codebook),
        ModelKindArg::Hmm => {
            let cfg = BaumWelchConfig {
                max_iters: a.max_iters.or(defaults.max_iters).unwrap_or(15),
                rel_tol: a.tol.or(defaults.tol).unwrap_or(1e-5),
                ..Default::default()
            };
            let trained = baum_welch(&utterances, &init_hmm_from_codebook(&codebook), &cfg)?;
            for (i, ll) in trained.ll_trace.iter().enumerate() {
                println!("iter {i} loglik {ll:.6}");
            }
            println!(
                "{} after {} iterations",
                if trained.converged { "converged" } else { "stopped" },
                trained.iterations
            );
            SpeakerModel::Hmm(trained.model)
        }
    };
    save_model(&ModelFile { framing, model }, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

fn cmd_mix(a: MixArgs) -> CliResult {
    let rate = FramingConfig::default().sample_rate;
    let x = read_wav(&a.target, Some(rate))?;
    let v = read_wav(&a.interf, Some(rate))?;
    let (x, v) = normalize_equal_power(&x, &v)?;
    let m = mix_at_tir(&x, &v, a.tir)?;
    // one common scale keeps the components summing to the mixture
    let peak = [&m.mixture, &m.target, &m.interference]
        .iter()
        .flat_map(|s| s.samples.iter())
        .fold(0.0f64, |p, s| p.max(s.abs()));
    let scale = if peak > 0.99 { 0.99 / peak } else { 1.0 };
    let out_target = a.out_target.unwrap_or_else(|| sibling(&a.out, "_target.wav"));
    let out_interf = a.out_interf.unwrap_or_else(|| sibling(&a.out, "_interf.wav"));
    write_wav(&a.out, &m.mixture.scaled(scale))?;
    write_wav(&out_target, &m.target.scaled(scale))?;
    write_wav(&out_interf, &m.interference.scaled(scale))?;
    println!("g_x {:.6} g_v {:.6} scale {scale:.6}", m.gx, m.gv);
    Ok(())
}

fn cmd_separate(a: SeparateArgs, defaults: &SeparateDefaults) -> CliResult {
    let mx = load_model(&a.model_x)?;
    let mv = load_model(&a.model_v)?;
    let framing = mx.framing;
    mv.check_framing(&framing)?;
    let mixture = read_wav(&a.mixture, Some(framing.sample_rate))?;
    let opts = SeparateOptions {
        infer: InferConfig {
            theta0: a.theta0.or(defaults.theta0).unwrap_or(0.0),
            outer_tol: a.outer_tol.or(defaults.outer_tol).unwrap_or(0.25),
            max_outer: a.max_outer.or(defaults.max_outer).unwrap_or(10),
            ..Default::default()
        },
        fixed_theta: a.fix_theta,
        unit_gains: a.unit_gains || defaults.unit_gains.unwrap_or(false),
        ..Default::default()
    };
    let method = a.method.map(Method::from).or(defaults.method).unwrap_or(Method::Gfhmm);
    let sep = separate(&mixture, &mx.model, &mv.model, &framing, method, &opts)?;
    write_wav(&a.out_x, &sep.target)?;
    write_wav(&a.out_v, &sep.interference)?;
    let diag_path = a.diagnostics.unwrap_or_else(|| a.out_x.with_extension("json"));
    let json =
        serde_json::to_string_pretty(&sep.diagnostics).map_err(|e| CliError::Core(Error::Numerical(e.to_string())))?;
    std::fs::write(&diag_path, json).map_err(Error::from)?;
    println!(
        "{method}: theta {:.2} dB, {} iterations, logprob {:.3}",
        sep.diagnostics.theta_hat, sep.diagnostics.iterations, sep.diagnostics.logprob
    );
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs, seed: Option<u64>, defaults: &EvaluateDefaults) -> CliResult {
    let mut manifest = Manifest::load(&a.manifest)?;
    if let Some(jobs) = a.jobs.or(defaults.jobs) {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        manifest.jobs = Some(jobs);
    }
    if let Some(s) = seed {
        manifest.seed = s;
    }
    let summary = run_experiment(&manifest, Some(&a.out))?;
    let failed = summary.rows.iter().filter(|r| !r.error.is_empty()).count();
    println!("{} runs, {failed} failed", summary.rows.len());
    print_means(&summary.means);
    Ok(())
}

fn print_means(means: &[gfhmm::eval::SummaryRow]) {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
    println!("method   theta  snr_target  snr_interf  theta_hat  iterations");
    for m in means {
        println!(
            "{:<8} {:>5}  {:>10}  {:>10}  {:>9}  {:>10}",
            m.method.name(),
            m.theta_true,
            fmt(m.mean_snr_target_db),
            fmt(m.mean_snr_interf_db),
            fmt(m.mean_theta_hat),
            fmt(m.mean_iterations)
        );
    }
}

fn cmd_report(a: ReportArgs) -> CliResult {
    let rows = read_results(&a.input)?;
    let means = summarize(&rows);
    write_summary(&a.out, &means)?;
    print_means(&means);
    Ok(())
}

fn cmd_synth(a: SynthArgs, seed: u64) -> CliResult {
    let framing = FramingConfig::default();
    let kind = match a.kind {
        SynthKindArg::HmmSample => SynthKind::HmmSample,
        SynthKindArg::Tonal => SynthKind::Tonal,
        SynthKindArg::FilteredNoise => SynthKind::FilteredNoise,
    };
    let model = match (&a.model, kind) {
        (Some(p), _) => Some(load_model(p)?.into_hmm(&framing)?),
        (None, SynthKind::HmmSample) => Some(speaker_generator(a.voice, &framing)?),
        (None, _) => None,
    };
    let sig: AudioSignal = synth_source(kind, model.as_ref(), a.voice, seed, a.duration, &framing)?;
    // unit RMS leaves too little headroom for 16-bit output
    let peak = sig.samples.iter().fold(0.0f64, |p, s| p.max(s.abs()));
    let out = if peak > 0.99 { sig.scaled(0.99 / peak) } else { sig };
    write_wav(&a.out, &out)?;
    Ok(())
}
