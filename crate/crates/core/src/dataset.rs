//! Dataset synthesis and batch evaluation.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::audio::AudioBuffer;
use crate::config::PipelineConfig;
use crate::error::{Error, Result, StageExt};
use crate::metrics::{
    aggregate, resample::resample, snr_curves, write_curves_csv, write_metrics_csv,
    write_summary_csv, MetricRecord, SnrBucket,
};
use crate::noise::{mix_at_snr, synth_harmonic_cs_noise, HarmonicNoiseParams, MixSpec};
use crate::pipeline::{enhance, input_snr_db, score, Reference};
use crate::speech::speech_proxy;
use crate::wav::{read_wav, write_wav, WavEncoding};

pub const MANIFEST_FILE: &str = "manifest.csv";
const MANIFEST_HEADER: &str =
    "file,source,f0_hz,snr_db,seed,num_harmonics,correlation,envelope_rate_hz,amplitude_decay";
/// Mixtures are scaled so that their peak stays below this level.
pub const PEAK_LIMIT: f64 = 0.99;
/// Step of the SNR grid used for the curve CSV.
pub const CURVE_STEP_DB: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub seed: u64,
    pub sample_rate: u32,
    pub f0_range: (f64, f64),
    pub snr_range: (f64, f64),
    pub mixtures_per_source: usize,
    /// Template for the noise generator; `f0` and `seed` are drawn per file.
    pub noise: HarmonicNoiseParams,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 0,
            sample_rate: 16_000,
            f0_range: (60.0, 150.0),
            snr_range: (-20.0, 0.0),
            mixtures_per_source: 1,
            noise: HarmonicNoiseParams::default(),
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let ok_range = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ok_range(self.f0_range) || !(self.f0_range.0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bad f0 range {:?}",
                self.f0_range
            )));
        }
        if !ok_range(self.snr_range) {
            return Err(Error::InvalidParameter(format!(
                "bad SNR range {:?}",
                self.snr_range
            )));
        }
        if self.mixtures_per_source == 0 {
            return Err(Error::InvalidParameter(
                "mixtures_per_source must be positive".into(),
            ));
        }
        let mut top = self.noise.clone();
        top.f0 = self.f0_range.1;
        top.validate(self.sample_rate)
    }
}

/// One row of the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub file: String,
    pub source: String,
    pub f0_hz: f64,
    pub snr_db: f64,
    pub seed: u64,
    pub num_harmonics: usize,
    pub correlation: f64,
    pub envelope_rate_hz: f64,
    pub amplitude_decay: f64,
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Sorted list of `*.wav` files in `dir`.
pub fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_wav = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if is_wav && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Writes `count` speech-like source files of `duration_secs` to `dir`.
pub fn write_speech_proxies(
    dir: &Path,
    count: usize,
    duration_secs: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    (0..count)
        .map(|i| {
            let path = dir.join(format!("proxy_{i:04}.wav"));
            let x = speech_proxy(duration_secs, sample_rate, seed.wrapping_add(i as u64));
            write_wav(&path, &x, WavEncoding::Float32)?;
            Ok(path)
        })
        .collect()
}

fn load_source(path: &Path, sample_rate: u32) -> Result<AudioBuffer<f64>> {
    let x = read_wav(path)?;
    if x.sample_rate == sample_rate {
        return Ok(x);
    }
    log::info!("resampling {} from {} Hz", path.display(), x.sample_rate);
    Ok(AudioBuffer::new(
        resample(&x.samples, x.sample_rate, sample_rate),
        sample_rate,
    ))
}

/// Mixes every source in `sources` with generator noise and writes
/// `clean/`, `noise/`, `mixture/` and the manifest into `out`.
pub fn synth_dataset(
    sources: &Path,
    out: &Path,
    params: &SynthParams,
) -> Result<Vec<ManifestEntry>> {
    params.validate()?;
    let files = list_wavs(sources)?;
    if files.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no .wav files in {}",
            sources.display()
        )));
    }
    for sub in ["clean", "noise", "mixture"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }

    // Draw every random parameter up front so the result does not depend
    // on processing order.
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut jobs = Vec::new();
    for src in &files {
        for rep in 0..params.mixtures_per_source {
            let f0 = draw(&mut rng, params.f0_range);
            let snr = draw(&mut rng, params.snr_range);
            let seed: u64 = rng.random();
            jobs.push((src, rep, f0, snr, seed));
        }
    }

    let entries: Vec<ManifestEntry> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(src, rep, f0, snr_db, seed))| {
            let stem = src.file_stem().unwrap_or_default().to_string_lossy();
            let file = if params.mixtures_per_source == 1 {
                format!("{i:04}_{stem}.wav")
            } else {
                format!("{i:04}_{stem}_{rep}.wav")
            };
            let clean = load_source(src, params.sample_rate)?;
            let noise_params = HarmonicNoiseParams {
                f0,
                seed,
                ..params.noise.clone()
            };
            let mut noise =
                synth_harmonic_cs_noise(clean.duration_secs(), params.sample_rate, &noise_params)?;
            noise.samples.resize(clean.len(), 0.0);
            let (mut mixture, mut scaled) =
                mix_at_snr(&clean, &noise, MixSpec { snr_db }).map_err(|e| e.in_stage("mix"))?;
            let mut clean = clean;
            let peak = mixture.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if peak > PEAK_LIMIT {
                let g = PEAK_LIMIT / peak;
                for b in [&mut clean, &mut scaled, &mut mixture] {
                    b.samples.iter_mut().for_each(|x| *x *= g);
                }
            }
            write_wav(&out.join("clean").join(&file), &clean, WavEncoding::Float32)?;
            write_wav(
                &out.join("noise").join(&file),
                &scaled,
                WavEncoding::Float32,
            )?;
            write_wav(
                &out.join("mixture").join(&file),
                &mixture,
                WavEncoding::Float32,
            )?;
            Ok(ManifestEntry {
                file,
                source: src
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned(),
                f0_hz: f0,
                snr_db,
                seed,
                num_harmonics: noise_params.num_harmonics,
                correlation: noise_params.correlation,
                envelope_rate_hz: noise_params.envelope_rate,
                amplitude_decay: noise_params.amplitude_decay,
            })
        })
        .collect::<Result<_>>()?;

    write_manifest(&out.join(MANIFEST_FILE), &entries)?;
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = String::from(MANIFEST_HEADER);
    text.push('\n');
    for e in entries {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{}",
            e.file,
            e.source,
            e.f0_hz,
            e.snr_db,
            e.seed,
            e.num_harmonics,
            e.correlation,
            e.envelope_rate_hz,
            e.amplitude_decay
        );
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    match lines.next() {
        Some((_, h)) if h.trim() == MANIFEST_HEADER => {}
        _ => return Err(parse_err(1, format!("expected header {MANIFEST_HEADER:?}"))),
    }
    let mut entries = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(parse_err(
                i + 1,
                format!("expected 9 fields, got {}", f.len()),
            ));
        }
        let num = |j: usize| -> Result<f64> {
            f[j].parse()
                .map_err(|_| parse_err(i + 1, format!("bad number {:?}", f[j])))
        };
        let int = |j: usize| -> Result<u64> {
            f[j].parse()
                .map_err(|_| parse_err(i + 1, format!("bad integer {:?}", f[j])))
        };
        entries.push(ManifestEntry {
            file: f[0].to_string(),
            source: f[1].to_string(),
            f0_hz: num(2)?,
            snr_db: num(3)?,
            seed: int(4)?,
            num_harmonics: int(5)? as usize,
            correlation: num(6)?,
            envelope_rate_hz: num(7)?,
            amplitude_decay: num(8)?,
        });
    }
    Ok(entries)
}

/// Output of [`eval_dataset`].
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub records: Vec<MetricRecord>,
    /// `(file, reason)` for every file that could not be scored.
    pub skipped: Vec<(String, String)>,
}

fn eval_one(dataset: &Path, entry: &ManifestEntry, cfg: &PipelineConfig) -> Result<MetricRecord> {
    let clean = read_wav(&dataset.join("clean").join(&entry.file)).stage("read")?;
    let noisy = read_wav(&dataset.join("mixture").join(&entry.file)).stage("read")?;
    if clean.len() != noisy.len() {
        return Err(Error::DimensionMismatch {
            expected: noisy.len(),
            got: clean.len(),
        }
        .in_stage("read"));
    }
    let enhanced = enhance(
        &noisy,
        Reference {
            clean: Some(&clean),
            f0: Some(entry.f0_hz),
        },
        cfg,
        false,
    )?;
    log::debug!(
        "{} [{}]: modulation set {}",
        entry.file,
        cfg.label(),
        enhanced.modset
    );
    score(
        &entry.file,
        &enhanced.output,
        &clean,
        input_snr_db(&noisy, &clean),
        cfg,
    )
}

/// Runs every configuration on every manifest entry and writes
/// `metrics.csv`, `summary.csv`, `curves.csv`, `run.log` and, when needed,
/// `skipped.log` into `out`.
pub fn eval_dataset(dataset: &Path, configs: &[PipelineConfig], out: &Path) -> Result<EvalReport> {
    if configs.is_empty() {
        return Err(Error::InvalidParameter(
            "no configurations to evaluate".into(),
        ));
    }
    for cfg in configs {
        cfg.validate().stage("config")?;
    }
    let entries = read_manifest(&dataset.join(MANIFEST_FILE)).stage("manifest")?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let jobs: Vec<(usize, &ManifestEntry)> = (0..configs.len())
        .flat_map(|c| entries.iter().map(move |e| (c, e)))
        .collect();
    let results: Vec<Result<MetricRecord>> = jobs
        .par_iter()
        .map(|&(c, e)| eval_one(dataset, e, &configs[c]))
        .collect();

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for ((c, e), r) in jobs.iter().zip(results) {
        match r {
            Ok(rec) => records.push(rec),
            Err(err) => {
                log::warn!("skipping {} [{}]: {err}", e.file, configs[*c].label());
                skipped.push((
                    format!("{} [{}]", e.file, configs[*c].label()),
                    err.to_string(),
                ));
            }
        }
    }

    let create = |name: &str| -> Result<BufWriter<fs::File>> {
        let p = out.join(name);
        Ok(BufWriter::new(
            fs::File::create(&p).map_err(|e| Error::io(&p, e))?,
        ))
    };
    let io_err = |name: &str| {
        let p = out.join(name);
        move |e| Error::io(p, e)
    };
    write_metrics_csv(&records, create("metrics.csv")?).map_err(io_err("metrics.csv"))?;
    let rows = aggregate(&records, &SnrBucket::defaults());
    write_summary_csv(&rows, create("summary.csv")?).map_err(io_err("summary.csv"))?;
    let curves = snr_curves(&records, CURVE_STEP_DB);
    write_curves_csv(&curves, create("curves.csv")?).map_err(io_err("curves.csv"))?;

    let mut log_text = String::new();
    let _ = writeln!(log_text, "dataset = {}", dataset.display());
    let _ = writeln!(log_text, "files = {}", entries.len());
    for (i, cfg) in configs.iter().enumerate() {
        let _ = writeln!(log_text, "\n[config {i}]");
        for (k, v) in cfg.to_key_values() {
            let _ = writeln!(log_text, "{k} = {v}");
        }
    }
    let _ = writeln!(log_text, "\nrecords = {}", records.len());
    let _ = writeln!(log_text, "skipped = {}", skipped.len());
    let p = out.join("run.log");
    fs::write(&p, log_text).map_err(|e| Error::io(&p, e))?;

    let skip_path = out.join("skipped.log");
    if skipped.is_empty() {
        if skip_path.exists() {
            fs::remove_file(&skip_path).map_err(|e| Error::io(&skip_path, e))?;
        }
    } else {
        let text: String = skipped.iter().map(|(f, r)| format!("{f}: {r}\n")).collect();
        fs::write(&skip_path, text).map_err(|e| Error::io(&skip_path, e))?;
    }
    Ok(EvalReport { records, skipped })
}
