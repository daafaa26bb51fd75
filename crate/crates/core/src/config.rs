//! Flat `key = value` pipeline configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default, so an empty file is a valid configuration. The same keys are
//! accepted as command-line overrides.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::baselines::{default_gain_floor, MinStatsParams};
use crate::cmpdr::CmpdrParams;
use crate::cyclic::EstimatorParams;
use crate::error::{Error, Result};
use crate::modulation::ModulationSet;
use crate::stft::StftConfig;
use crate::wav::WavEncoding;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreprocKind {
    Identity,
    Wiener,
    Cmpdr,
}

impl PreprocKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Identity => "id",
            Self::Wiener => "wiener",
            Self::Cmpdr => "cmpdr",
        }
    }
}

impl FromStr for PreprocKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "id" | "identity" => Ok(Self::Identity),
            "wiener" => Ok(Self::Wiener),
            "cmpdr" => Ok(Self::Cmpdr),
            other => Err(Error::InvalidParameter(format!(
                "unknown preprocessor {other:?} (expected id, wiener or cmpdr)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    None,
    OracleIrm,
}

impl MaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::OracleIrm => "oracle-irm",
        }
    }
}

impl FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "oracle-irm" | "irm" => Ok(Self::OracleIrm),
            other => Err(Error::InvalidParameter(format!(
                "unknown mask {other:?} (expected none or oracle-irm)"
            ))),
        }
    }
}

/// Where the cMPDR modulation set comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ModsetSource {
    /// Estimated from the recording.
    Estimate,
    /// Given explicitly.
    Fixed(ModulationSet),
    /// `{0, f0, …, (n-1)·f0}` from the known noise fundamental of a
    /// synthesized recording.
    OracleHarmonics(usize),
}

impl fmt::Display for ModsetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Estimate => f.write_str("auto"),
            Self::Fixed(m) => {
                let parts: Vec<String> = m.shifts().iter().map(|a| a.to_string()).collect();
                f.write_str(&parts.join(","))
            }
            Self::OracleHarmonics(n) => write!(f, "oracle:{n}"),
        }
    }
}

impl FromStr for ModsetSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "auto" {
            return Ok(Self::Estimate);
        }
        if let Some(n) = s.strip_prefix("oracle:") {
            let n: usize = n.parse().map_err(|_| {
                Error::InvalidParameter(format!("bad oracle channel count in {s:?}"))
            })?;
            if n == 0 {
                return Err(Error::InvalidParameter(
                    "oracle channel count must be positive".into(),
                ));
            }
            return Ok(Self::OracleHarmonics(n));
        }
        Ok(Self::Fixed(s.parse()?))
    }
}

/// Every tunable of one enhancement run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Label written to the `preproc` column; defaults to the preprocessor.
    pub name: Option<String>,
    pub sample_rate: u32,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub fft_size: usize,
    pub preproc: PreprocKind,
    pub mask: MaskKind,
    pub modset: ModsetSource,
    pub cmpdr: CmpdrParams,
    pub estimator: EstimatorParams,
    pub min_stats: MinStatsParams,
    pub gain_floor: f64,
    pub seed: u64,
    pub encoding: WavEncoding,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            name: None,
            sample_rate: 16_000,
            frame_ms: 32.0,
            hop_ms: 8.0,
            fft_size: 512,
            preproc: PreprocKind::Cmpdr,
            mask: MaskKind::None,
            modset: ModsetSource::Estimate,
            cmpdr: CmpdrParams::default(),
            estimator: EstimatorParams::default(),
            min_stats: MinStatsParams::default(),
            gain_floor: default_gain_floor(),
            seed: 0,
            encoding: WavEncoding::Float32,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::InvalidParameter(format!("{key} = {value:?}: {e}")))
}

impl PipelineConfig {
    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.preproc.as_str().to_string())
    }

    pub fn stft_config(&self) -> Result<StftConfig> {
        StftConfig::from_durations(
            self.sample_rate,
            self.frame_ms / 1000.0,
            self.hop_ms / 1000.0,
            self.fft_size,
        )
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "name" => self.name = Some(v.to_string()),
            "sample_rate" => self.sample_rate = parse(key, v)?,
            "frame_ms" => self.frame_ms = parse(key, v)?,
            "hop_ms" => self.hop_ms = parse(key, v)?,
            "fft_size" => self.fft_size = parse(key, v)?,
            "preproc" => self.preproc = v.parse()?,
            "mask" => self.mask = v.parse()?,
            "modset" => self.modset = v.parse()?,
            "beta_x" => self.cmpdr.beta_x = parse(key, v)?,
            "loading" => self.cmpdr.loading = parse(key, v)?,
            "init_scale" => self.cmpdr.init_scale = parse(key, v)?,
            "weight_stride" => self.cmpdr.weight_stride = parse(key, v)?,
            "welch_seg_len" => self.estimator.seg_len = parse(key, v)?,
            "welch_overlap" => self.estimator.overlap = parse(key, v)?,
            "max_peaks" => self.estimator.peaks.max_peaks = parse(key, v)?,
            "peak_threshold_db" => self.estimator.peaks.threshold_db = parse(key, v)?,
            "peak_min_separation" => self.estimator.peaks.min_separation_bins = parse(key, v)?,
            "coherence_threshold" => self.estimator.coherence_threshold = parse(key, v)?,
            "c_max" => self.estimator.max_channels = parse(key, v)?,
            "max_candidates" => self.estimator.max_candidates = parse(key, v)?,
            "refine" => self.estimator.refine = parse(key, v)?,
            "min_stats_window_sec" => self.min_stats.window_sec = parse(key, v)?,
            "min_stats_alpha" => self.min_stats.smooth_alpha = parse(key, v)?,
            "min_stats_bias" => self.min_stats.bias = parse(key, v)?,
            "gain_floor" => self.gain_floor = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "encoding" => self.encoding = v.parse()?,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown configuration key {other:?}"
                )))
            }
        }
        Ok(())
    }

    /// Applies a `key=value` override string.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("expected key=value, got {pair:?}")))?;
        self.set(k, v)
    }

    pub fn parse_str(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(body, _)| body).trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |reason: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                reason,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected key = value".into()))?;
            cfg.set(k, v).map_err(|e| parse_err(e.to_string()))?;
        }
        cfg.validate()
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", origin.display())))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, path)
    }

    /// Checks parameter ranges and the STFT geometry.
    pub fn validate(&self) -> Result<()> {
        self.stft_config()?;
        self.cmpdr.validate()?;
        self.estimator.validate()?;
        self.min_stats.validate()?;
        if !(self.gain_floor > 0.0 && self.gain_floor < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gain_floor must lie in (0, 1), got {}",
                self.gain_floor
            )));
        }
        if let ModsetSource::Fixed(m) = &self.modset {
            ModulationSet::new(m.shifts().to_vec(), self.sample_rate)?;
        }
        Ok(())
    }

    /// Every setting as `key = value` lines, in a fixed order.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("name", self.label()),
            ("sample_rate", self.sample_rate.to_string()),
            ("frame_ms", self.frame_ms.to_string()),
            ("hop_ms", self.hop_ms.to_string()),
            ("fft_size", self.fft_size.to_string()),
            ("preproc", self.preproc.as_str().to_string()),
            ("mask", self.mask.as_str().to_string()),
            ("modset", self.modset.to_string()),
            ("beta_x", self.cmpdr.beta_x.to_string()),
            ("loading", self.cmpdr.loading.to_string()),
            ("init_scale", self.cmpdr.init_scale.to_string()),
            ("weight_stride", self.cmpdr.weight_stride.to_string()),
            ("welch_seg_len", self.estimator.seg_len.to_string()),
            ("welch_overlap", self.estimator.overlap.to_string()),
            ("max_peaks", self.estimator.peaks.max_peaks.to_string()),
            (
                "peak_threshold_db",
                self.estimator.peaks.threshold_db.to_string(),
            ),
            (
                "peak_min_separation",
                self.estimator.peaks.min_separation_bins.to_string(),
            ),
            (
                "coherence_threshold",
                self.estimator.coherence_threshold.to_string(),
            ),
            ("c_max", self.estimator.max_channels.to_string()),
            ("max_candidates", self.estimator.max_candidates.to_string()),
            ("refine", self.estimator.refine.to_string()),
            (
                "min_stats_window_sec",
                self.min_stats.window_sec.to_string(),
            ),
            ("min_stats_alpha", self.min_stats.smooth_alpha.to_string()),
            ("min_stats_bias", self.min_stats.bias.to_string()),
            ("gain_floor", self.gain_floor.to_string()),
            ("seed", self.seed.to_string()),
            ("encoding", self.encoding.as_str().to_string()),
        ];
        if self.name.is_none() {
            kv.remove(0);
        }
        kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}
