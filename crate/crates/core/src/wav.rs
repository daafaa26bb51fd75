//! Mono WAV input and output (16-bit PCM or 32-bit float).

use std::path::Path;
use std::str::FromStr;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    Pcm16,
    #[default]
    Float32,
}

impl FromStr for WavEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" => Ok(Self::Pcm16),
            "float32" => Ok(Self::Float32),
            other => Err(Error::InvalidParameter(format!(
                "unknown WAV encoding {other:?} (expected pcm16 or float32)"
            ))),
        }
    }
}

impl WavEncoding {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pcm16 => "pcm16",
            Self::Float32 => "float32",
        }
    }
}

fn wav_err(path: &Path, source: hound::Error) -> Error {
    match source {
        hound::Error::IoError(e) => Error::io(path, e),
        source => Error::Wav {
            path: path.to_path_buf(),
            source,
        },
    }
}

/// Reads a mono PCM16 or float32 file into samples in `[-1, 1]`.
pub fn read_wav(path: &Path) -> Result<AudioBuffer<f64>> {
    let reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    let unsupported = |reason: String| Error::UnsupportedWav {
        path: path.to_path_buf(),
        reason,
    };
    if spec.channels != 1 {
        return Err(unsupported(format!(
            "{} channels, only mono is supported",
            spec.channels
        )));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<Vec<_>, _>>(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<Vec<_>, _>>(),
        (fmt, bits) => {
            return Err(unsupported(format!(
                "{bits}-bit {fmt:?} samples, expected 16-bit PCM or 32-bit float"
            )))
        }
    }
    .map_err(|e| wav_err(path, e))?;
    Ok(AudioBuffer::new(samples, spec.sample_rate))
}

/// Outcome of a write: how many samples had to be clipped to `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WriteReport {
    pub clipped: usize,
}

/// Writes a mono file, clipping samples outside `[-1, 1]`.
pub fn write_wav(
    path: &Path,
    buffer: &AudioBuffer<f64>,
    encoding: WavEncoding,
) -> Result<WriteReport> {
    if buffer.is_empty() {
        return Err(Error::EmptySignal);
    }
    if let Some(bad) = buffer.samples.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "cannot write non-finite sample {bad}"
        )));
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate,
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => SampleFormat::Int,
            WavEncoding::Float32 => SampleFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    let mut report = WriteReport::default();
    for &s in &buffer.samples {
        let v = if s.abs() > 1.0 {
            report.clipped += 1;
            s.signum()
        } else {
            s
        };
        match encoding {
            WavEncoding::Pcm16 => {
                let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(q)
            }
            WavEncoding::Float32 => writer.write_sample(v as f32),
        }
        .map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))?;
    if report.clipped > 0 {
        log::warn!("{}: clipped {} samples", path.display(), report.clipped);
    }
    Ok(report)
}
