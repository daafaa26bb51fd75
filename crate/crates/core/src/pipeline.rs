//! Two-stage enhancement: preprocessor, then optional mask.

use std::path::Path;

use crate::audio::AudioBuffer;
use crate::baselines::{apply_mask, min_stats_noise_psd, oracle_irm, wiener_gain};
use crate::cmpdr::{process_with, CmpdrDiagnostics, CmpdrStats};
use crate::config::{MaskKind, ModsetSource, PipelineConfig, PreprocKind};
use crate::cyclic::{estimate_modulation_set, CoherenceReport};
use crate::error::{Error, Result, StageExt};
use crate::metrics::{si_sdr, stoi, MetricRecord};
use crate::modulation::{build_augmented, ModulationSet};
use crate::stft::{istft_real, ComplexSpectrogram};
use crate::wav::{read_wav, write_wav};

/// Side information for one enhancement run.
#[derive(Debug, Clone, Copy, Default)]
pub struct Reference<'a> {
    /// Clean speech, required by the oracle mask.
    pub clean: Option<&'a AudioBuffer<f64>>,
    /// Known noise fundamental, required by `modset = oracle:N`.
    pub f0: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Enhanced {
    pub output: AudioBuffer<f64>,
    /// Preprocessor output before masking.
    pub preprocessed: ComplexSpectrogram,
    /// Final spectrogram after masking.
    pub spectrogram: ComplexSpectrogram,
    pub modset: ModulationSet,
    pub coherence: Vec<CoherenceReport>,
    pub cmpdr_stats: Option<CmpdrStats>,
    pub diagnostics: Option<CmpdrDiagnostics>,
}

/// Resolves the modulation set used by the cMPDR preprocessor.
pub fn resolve_modset(
    noisy: &AudioBuffer<f64>,
    cfg: &PipelineConfig,
    f0: Option<f64>,
) -> Result<(ModulationSet, Vec<CoherenceReport>)> {
    if cfg.preproc != PreprocKind::Cmpdr {
        return Ok((ModulationSet::trivial(), vec![]));
    }
    match &cfg.modset {
        ModsetSource::Fixed(m) => Ok((
            ModulationSet::new(m.shifts().to_vec(), noisy.sample_rate)?,
            vec![],
        )),
        ModsetSource::OracleHarmonics(n) => {
            let f0 = f0.ok_or_else(|| {
                Error::InvalidParameter("modset = oracle:N needs the noise fundamental".into())
            })?;
            Ok((ModulationSet::harmonic(f0, *n, noisy.sample_rate)?, vec![]))
        }
        ModsetSource::Estimate => {
            let est = estimate_modulation_set(noisy, &cfg.estimator, &cfg.stft_config()?)?;
            Ok((est.modset, est.reports))
        }
    }
}

/// Runs the configured pipeline on an in-memory recording.
pub fn enhance(
    noisy: &AudioBuffer<f64>,
    reference: Reference<'_>,
    cfg: &PipelineConfig,
    record_diagnostics: bool,
) -> Result<Enhanced> {
    cfg.validate().stage("config")?;
    if noisy.sample_rate != cfg.sample_rate {
        return Err(Error::SampleRateMismatch {
            signal: noisy.sample_rate,
            expected: cfg.sample_rate,
        }
        .in_stage("input"));
    }
    let stft_cfg = cfg.stft_config().stage("stft")?;
    let (modset, coherence) =
        resolve_modset(noisy, cfg, reference.f0).stage("modulation-estimation")?;
    log::info!("modulation set {modset}");

    let clean = match (cfg.mask, reference.clean) {
        (MaskKind::OracleIrm, None) => {
            return Err(
                Error::InvalidParameter("the oracle mask needs a clean reference".into())
                    .in_stage("mask"),
            )
        }
        (MaskKind::OracleIrm, Some(c)) => {
            if c.len() != noisy.len() || c.sample_rate != noisy.sample_rate {
                return Err(Error::DimensionMismatch {
                    expected: noisy.len(),
                    got: c.len(),
                }
                .in_stage("mask"));
            }
            Some(c)
        }
        (MaskKind::None, _) => None,
    };

    let aug = build_augmented(noisy, &modset, &stft_cfg).stage("stft")?;
    let clean_aug = clean
        .map(|c| build_augmented(c, &modset, &stft_cfg))
        .transpose()
        .stage("stft")?;

    let mut cmpdr_stats = None;
    let mut diagnostics = None;
    let (preprocessed, clean_pre) = match cfg.preproc {
        PreprocKind::Identity => (
            aug.reference().clone(),
            clean_aug.map(|a| a.into_reference()),
        ),
        PreprocKind::Wiener => {
            let noise = min_stats_noise_psd(aug.reference(), &cfg.min_stats).stage("preprocess")?;
            let gain = wiener_gain(aug.reference(), &noise, cfg.gain_floor).stage("preprocess")?;
            let y = apply_mask(aug.reference(), &gain).stage("preprocess")?;
            let yc = clean_aug
                .map(|a| apply_mask(a.reference(), &gain))
                .transpose()
                .stage("preprocess")?;
            (y, yc)
        }
        PreprocKind::Cmpdr => {
            let companions: Vec<_> = clean_aug.iter().collect();
            let out = process_with(&aug, &companions, &cfg.cmpdr, record_diagnostics)
                .stage("preprocess")?;
            cmpdr_stats = Some(out.stats);
            diagnostics = out.diagnostics;
            let mut comps = out.companions.into_iter();
            (out.output, comps.next())
        }
    };

    let spectrogram = match (cfg.mask, clean_pre) {
        (MaskKind::OracleIrm, Some(clean_pre)) => {
            let residual = preprocessed
                .with_data(
                    preprocessed
                        .data()
                        .iter()
                        .zip(clean_pre.data())
                        .map(|(y, c)| y - c)
                        .collect(),
                )
                .stage("mask")?;
            let mask = oracle_irm(&clean_pre, &residual).stage("mask")?;
            apply_mask(&preprocessed, &mask).stage("mask")?
        }
        _ => preprocessed.clone(),
    };
    let output = istft_real(&spectrogram).stage("synthesis")?;

    Ok(Enhanced {
        output,
        preprocessed,
        spectrogram,
        modset,
        coherence,
        cmpdr_stats,
        diagnostics,
    })
}

/// SNR of a mixture against its clean component.
pub fn input_snr_db(noisy: &AudioBuffer<f64>, clean: &AudioBuffer<f64>) -> f64 {
    let noise: f64 = noisy
        .samples
        .iter()
        .zip(&clean.samples)
        .map(|(x, s)| (x - s).powi(2))
        .sum();
    let speech: f64 = clean.samples.iter().map(|s| s * s).sum();
    10.0 * (speech / noise).log10()
}

/// SI-SDR and STOI of `output` against `clean`.
pub fn score(
    file: &str,
    output: &AudioBuffer<f64>,
    clean: &AudioBuffer<f64>,
    input_snr_db: f64,
    cfg: &PipelineConfig,
) -> Result<MetricRecord> {
    Ok(MetricRecord {
        file: file.to_string(),
        input_snr_db,
        preproc: cfg.label(),
        mask: cfg.mask.as_str().to_string(),
        si_sdr_db: si_sdr(output, clean).stage("metrics")?,
        stoi: stoi(output, clean, clean.sample_rate).stage("metrics")?,
    })
}

/// Outcome of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub modset: ModulationSet,
    pub record: Option<MetricRecord>,
    pub clipped: usize,
    pub cmpdr_stats: Option<CmpdrStats>,
}

/// Reads `input`, enhances it, writes `output`, and scores the result when
/// a clean reference is given.
pub fn run_pipeline(
    input: &Path,
    output: &Path,
    reference: Option<&Path>,
    f0: Option<f64>,
    cfg: &PipelineConfig,
    diagnostics: Option<&Path>,
) -> Result<PipelineReport> {
    let noisy = read_wav(input).stage("read")?;
    let clean = reference.map(read_wav).transpose().stage("read")?;
    let enhanced = enhance(
        &noisy,
        Reference {
            clean: clean.as_ref(),
            f0,
        },
        cfg,
        diagnostics.is_some(),
    )?;
    if let (Some(path), Some(diag)) = (diagnostics, &enhanced.diagnostics) {
        diag.write_file(path).stage("diagnostics")?;
    }
    let clipped = write_wav(output, &enhanced.output, cfg.encoding)
        .stage("write")?
        .clipped;
    let record = clean
        .as_ref()
        .map(|c| {
            score(
                &input.display().to_string(),
                &enhanced.output,
                c,
                input_snr_db(&noisy, c),
                cfg,
            )
        })
        .transpose()?;
    Ok(PipelineReport {
        modset: enhanced.modset,
        record,
        clipped,
        cmpdr_stats: enhanced.cmpdr_stats,
    })
}
