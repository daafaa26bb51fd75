use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cyclobeam::config::{MaskKind, ModsetSource, PipelineConfig, PreprocKind};
use cyclobeam::dataset::{eval_dataset, synth_dataset, write_speech_proxies, SynthParams};
use cyclobeam::pipeline::{resolve_modset, run_pipeline};
use cyclobeam::wav::read_wav;
use cyclobeam::{Result, StageExt};

#[derive(Parser)]
#[command(
    name = "cyclobeam",
    version,
    about = "Cyclic MPDR speech enhancement toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset of speech + harmonic noise mixtures.
    Synth(SynthArgs),
    /// Enhance one WAV file.
    Enhance(EnhanceArgs),
    /// Evaluate configurations over a synthesized dataset.
    Eval(EvalArgs),
    /// Estimate and print the modulation set of a WAV file.
    Modset(ModsetArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set beta_x=0.9`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    preproc: Option<PreprocKind>,
    #[arg(long)]
    mask: Option<MaskKind>,
    /// `auto`, `oracle:N`, or an explicit list such as `0,120,240`.
    #[arg(long)]
    modset: Option<ModsetSource>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        for pair in &self.overrides {
            cfg.set_pair(pair)?;
        }
        if let Some(p) = self.preproc {
            cfg.preproc = p;
        }
        if let Some(m) = self.mask {
            cfg.mask = m;
        }
        if let Some(m) = &self.modset {
            cfg.modset = m.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Directory of clean mono speech WAV files.
    #[arg(long, required_unless_present = "speech_proxy")]
    sources: Option<PathBuf>,
    /// Generate this many speech-like sources instead of reading `--sources`.
    #[arg(long, conflicts_with = "sources")]
    speech_proxy: Option<usize>,
    /// Duration of generated sources in seconds.
    #[arg(long, default_value_t = 8.0)]
    proxy_duration: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    per_source: usize,
    #[arg(long, default_value_t = 60.0)]
    f0_min: f64,
    #[arg(long, default_value_t = 150.0)]
    f0_max: f64,
    #[arg(long, default_value_t = -20.0, allow_negative_numbers = true)]
    snr_min: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    snr_max: f64,
    #[arg(long, default_value_t = 10)]
    harmonics: usize,
    /// Envelope correlation between harmonics.
    #[arg(long, default_value_t = 0.9)]
    correlation: f64,
    #[arg(long, default_value_t = 5.0)]
    envelope_rate: f64,
    #[arg(long, default_value_t = 0.5)]
    amplitude_decay: f64,
}

#[derive(Args)]
struct EnhanceArgs {
    input: PathBuf,
    output: PathBuf,
    /// Clean reference; enables the oracle mask and metric output.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Noise fundamental in Hz, used by `--modset oracle:N`.
    #[arg(long)]
    f0: Option<f64>,
    /// Write the per-bin covariance and weight trajectory here.
    #[arg(long)]
    dump_diagnostics: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset directory written by `synth`.
    dataset: PathBuf,
    /// Output directory for the CSV files.
    #[arg(long)]
    out: PathBuf,
    /// Configuration files to evaluate; without any, the six combinations
    /// of preprocessor and mask are run with default settings.
    #[arg(long = "config")]
    configs: Vec<PathBuf>,
    /// Override applied to every configuration.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct ModsetArgs {
    input: PathBuf,
    /// Print every scored candidate with its coherence.
    #[arg(long)]
    verbose: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

fn default_grid() -> Vec<PipelineConfig> {
    let mut out = Vec::new();
    for mask in [MaskKind::None, MaskKind::OracleIrm] {
        for preproc in [
            PreprocKind::Identity,
            PreprocKind::Wiener,
            PreprocKind::Cmpdr,
        ] {
            out.push(PipelineConfig {
                preproc,
                mask,
                ..PipelineConfig::default()
            });
        }
    }
    out
}

fn synth(args: SynthArgs) -> Result<()> {
    let sources = match (args.sources, args.speech_proxy) {
        (Some(dir), _) => dir,
        (None, Some(n)) => {
            let dir = args.out.join("sources");
            write_speech_proxies(&dir, n, args.proxy_duration, 16_000, args.seed)
                .stage("sources")?;
            dir
        }
        (None, None) => unreachable!("clap requires one of the source options"),
    };
    let defaults = SynthParams::default();
    let params = SynthParams {
        seed: args.seed,
        f0_range: (args.f0_min, args.f0_max),
        snr_range: (args.snr_min, args.snr_max),
        mixtures_per_source: args.per_source,
        noise: cyclobeam::noise::HarmonicNoiseParams {
            num_harmonics: args.harmonics,
            correlation: args.correlation,
            envelope_rate: args.envelope_rate,
            amplitude_decay: args.amplitude_decay,
            ..defaults.noise.clone()
        },
        ..defaults
    };
    let entries = synth_dataset(&sources, &args.out, &params).stage("synth")?;
    println!("wrote {} mixtures to {}", entries.len(), args.out.display());
    Ok(())
}

fn enhance(args: EnhanceArgs) -> Result<()> {
    let cfg = args.config.load().stage("config")?;
    let report = run_pipeline(
        &args.input,
        &args.output,
        args.reference.as_deref(),
        args.f0,
        &cfg,
        args.dump_diagnostics.as_deref(),
    )?;
    println!("modulation set: {}", report.modset);
    if report.clipped > 0 {
        log::warn!("{} output samples clipped", report.clipped);
    }
    if let Some(stats) = report.cmpdr_stats {
        if stats.passthrough_frames > 0 {
            log::warn!(
                "{} frames fell back to pass-through",
                stats.passthrough_frames
            );
        }
    }
    if let Some(r) = report.record {
        println!("input SNR: {:.2} dB", r.input_snr_db);
        println!("SI-SDR: {:.2} dB", r.si_sdr_db);
        println!("STOI: {:.4}", r.stoi);
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let mut configs = if args.configs.is_empty() {
        default_grid()
    } else {
        args.configs
            .iter()
            .map(|p| PipelineConfig::load(p))
            .collect::<Result<_>>()
            .stage("config")?
    };
    for cfg in &mut configs {
        for pair in &args.overrides {
            cfg.set_pair(pair).stage("config")?;
        }
    }
    let report = eval_dataset(&args.dataset, &configs, &args.out)?;
    println!(
        "{} records written to {}, {} skipped",
        report.records.len(),
        args.out.display(),
        report.skipped.len()
    );
    Ok(())
}

fn modset(args: ModsetArgs) -> Result<()> {
    let mut cfg = args.config.load().stage("config")?;
    cfg.preproc = PreprocKind::Cmpdr;
    let x = read_wav(Path::new(&args.input)).stage("read")?;
    let (set, reports) = resolve_modset(&x, &cfg, None).stage("modulation-estimation")?;
    if args.verbose {
        for r in &reports {
            println!(
                "{:>10.3} Hz  coherence {:.3}{}",
                r.candidate,
                r.coherence,
                if r.accepted { "  *" } else { "" }
            );
        }
    }
    println!("{set}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Enhance(a) => enhance(a),
        Command::Eval(a) => eval(a),
        Command::Modset(a) => modset(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
