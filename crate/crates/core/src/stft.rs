//! Short-time Fourier analysis and weighted overlap-add synthesis.
//!
//! Frames start at `ℓ·hop - (frame_len - hop)` in signal coordinates, so the
//! signal is zero-padded by `frame_len - hop` at the start and as much as
//! needed at the end for every sample to be covered by the full set of
//! overlapping frames. Synthesis therefore reconstructs every sample, edges
//! included. The full two-sided spectrum of `fft_size` bins is kept because
//! combinations of complex-modulated channels are not conjugate symmetric.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::{AudioBuffer, ComplexBuffer};
use crate::error::{Error, Result};

/// Maximum relative deviation of the overlap-added window product from a
/// constant before a window pair is rejected for synthesis.
pub const COLA_TOLERANCE: f64 = 1e-10;

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// STFT frame geometry and window pair.
#[derive(Debug, Clone, PartialEq)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    analysis: Vec<f64>,
    synthesis: Vec<f64>,
}

impl StftConfig {
    /// Square-root periodic Hann analysis/synthesis pair, normalized so the
    /// overlap-added product of the two windows is exactly one.
    pub fn new(sample_rate: u32, frame_len: usize, hop: usize, fft_size: usize) -> Result<Self> {
        check_geometry(sample_rate, frame_len, hop, fft_size)?;
        let analysis: Vec<f64> = hann_periodic(frame_len).iter().map(|w| w.sqrt()).collect();
        let sums = overlap_sums(&analysis, &analysis, hop);
        let norm = sums.iter().sum::<f64>() / sums.len() as f64;
        if norm <= 0.0 {
            return Err(Error::InvalidStftConfig("window sums to zero".into()));
        }
        let synthesis = analysis.iter().map(|w| w / norm).collect();
        let cfg = Self {
            sample_rate,
            frame_len,
            hop,
            fft_size,
            analysis,
            synthesis,
        };
        let dev = cfg.cola_deviation();
        if dev > COLA_TOLERANCE {
            return Err(Error::NotCola { deviation: dev });
        }
        Ok(cfg)
    }

    /// 32 ms frames, 8 ms hop, 512-point FFT at 16 kHz.
    pub fn speech_16k() -> Self {
        Self::from_durations(16_000, 0.032, 0.008, 512).expect("valid default geometry")
    }

    /// Geometry from frame and hop durations in seconds.
    pub fn from_durations(
        sample_rate: u32,
        frame_secs: f64,
        hop_secs: f64,
        fft_size: usize,
    ) -> Result<Self> {
        let frame_len = (frame_secs * sample_rate as f64).round() as usize;
        let hop = (hop_secs * sample_rate as f64).round() as usize;
        Self::new(sample_rate, frame_len, hop, fft_size)
    }

    /// Arbitrary window pair. Analysis works with any pair; synthesis
    /// rejects pairs that are not constant-overlap-add.
    pub fn with_windows(
        sample_rate: u32,
        hop: usize,
        fft_size: usize,
        analysis: Vec<f64>,
        synthesis: Vec<f64>,
    ) -> Result<Self> {
        let frame_len = analysis.len();
        check_geometry(sample_rate, frame_len, hop, fft_size)?;
        if synthesis.len() != frame_len {
            return Err(Error::InvalidStftConfig(format!(
                "synthesis window has {} samples, analysis window has {frame_len}",
                synthesis.len()
            )));
        }
        Ok(Self {
            sample_rate,
            frame_len,
            hop,
            fft_size,
            analysis,
            synthesis,
        })
    }

    pub fn analysis_window(&self) -> &[f64] {
        &self.analysis
    }

    pub fn synthesis_window(&self) -> &[f64] {
        &self.synthesis
    }

    /// Samples of zero padding before the first sample.
    pub fn pad(&self) -> usize {
        self.frame_len - self.hop
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        if len == 0 {
            return 0;
        }
        (len - 1 + self.pad()) / self.hop + 1
    }

    /// Frequency in Hz of bin `k`, mapped to `[-fs/2, fs/2)`.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        let k = k as f64;
        let n = self.fft_size as f64;
        let f = k * self.sample_rate as f64 / n;
        if k >= n / 2.0 {
            f - self.sample_rate as f64
        } else {
            f
        }
    }

    /// Frames per second.
    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    /// Largest relative deviation of `Σ_r w_a(n + r·hop)·w_s(n + r·hop)`
    /// from its mean.
    pub fn cola_deviation(&self) -> f64 {
        let sums = overlap_sums(&self.analysis, &self.synthesis, self.hop);
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        if mean.abs() < f64::MIN_POSITIVE {
            return f64::INFINITY;
        }
        sums.iter()
            .map(|s| ((s - mean) / mean).abs())
            .fold(0.0, f64::max)
    }

    fn cola_gain(&self) -> f64 {
        let sums = overlap_sums(&self.analysis, &self.synthesis, self.hop);
        sums.iter().sum::<f64>() / sums.len() as f64
    }
}

fn check_geometry(sample_rate: u32, frame_len: usize, hop: usize, fft_size: usize) -> Result<()> {
    if sample_rate == 0 {
        return Err(Error::InvalidStftConfig(
            "sample rate must be positive".into(),
        ));
    }
    if frame_len == 0 || hop == 0 {
        return Err(Error::InvalidStftConfig(
            "frame length and hop must be positive".into(),
        ));
    }
    if frame_len > fft_size {
        return Err(Error::InvalidStftConfig(format!(
            "frame length {frame_len} exceeds FFT size {fft_size}"
        )));
    }
    if !frame_len.is_multiple_of(hop) {
        return Err(Error::InvalidStftConfig(format!(
            "hop {hop} does not divide frame length {frame_len}"
        )));
    }
    Ok(())
}

fn overlap_sums(a: &[f64], s: &[f64], hop: usize) -> Vec<f64> {
    (0..hop)
        .map(|n| (n..a.len()).step_by(hop).map(|i| a[i] * s[i]).sum::<f64>())
        .collect()
}

/// `K × L` grid of complex STFT coefficients, stored bin-major: the frames
/// of bin `k` are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    data: Vec<Complex64>,
    bins: usize,
    frames: usize,
    signal_len: usize,
    config: Arc<StftConfig>,
}

impl ComplexSpectrogram {
    pub fn zeros(config: Arc<StftConfig>, frames: usize, signal_len: usize) -> Self {
        let bins = config.fft_size;
        Self {
            data: vec![Complex64::new(0.0, 0.0); bins * frames],
            bins,
            frames,
            signal_len,
            config,
        }
    }

    /// Spectrogram with the same geometry as `self` and the given data.
    pub fn with_data(&self, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(Error::DimensionMismatch {
                expected: self.data.len(),
                got: data.len(),
            });
        }
        Ok(self.like(data))
    }

    fn like(&self, data: Vec<Complex64>) -> Self {
        Self {
            data,
            bins: self.bins,
            frames: self.frames,
            signal_len: self.signal_len,
            config: self.config.clone(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config.clone(), self.frames, self.signal_len)
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.bins, self.frames)
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn shared_config(&self) -> Arc<StftConfig> {
        self.config.clone()
    }

    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        self.data[k * self.frames + l]
    }

    pub fn set(&mut self, k: usize, l: usize, v: Complex64) {
        self.data[k * self.frames + l] = v;
    }

    /// All frames of bin `k`.
    pub fn bin(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.frames..(k + 1) * self.frames]
    }

    pub fn bin_mut(&mut self, k: usize) -> &mut [Complex64] {
        &mut self.data[k * self.frames..(k + 1) * self.frames]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scaled(&self, gain: f64) -> Self {
        self.like(self.data.iter().map(|z| z * gain).collect())
    }

    pub(crate) fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                got: other.shape(),
            });
        }
        Ok(())
    }
}

/// Forward STFT of a real or complex signal.
pub fn stft<T>(signal: &AudioBuffer<T>, cfg: &StftConfig) -> Result<ComplexSpectrogram>
where
    T: Copy + Into<Complex64>,
{
    stft_shared(signal, &Arc::new(cfg.clone()))
}

/// Forward STFT sharing an existing configuration handle.
pub fn stft_shared<T>(signal: &AudioBuffer<T>, cfg: &Arc<StftConfig>) -> Result<ComplexSpectrogram>
where
    T: Copy + Into<Complex64>,
{
    if signal.is_empty() {
        return Err(Error::EmptySignal);
    }
    if signal.sample_rate != cfg.sample_rate {
        return Err(Error::SampleRateMismatch {
            signal: signal.sample_rate,
            expected: cfg.sample_rate,
        });
    }
    let n = signal.len();
    let frames = cfg.num_frames(n);
    let k_bins = cfg.fft_size;
    let pad = cfg.pad() as isize;
    let window = cfg.analysis_window();
    let fft = FftPlanner::new().plan_fft_forward(k_bins);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); k_bins];
    let mut out = ComplexSpectrogram::zeros(cfg.clone(), frames, n);

    for l in 0..frames {
        buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        let start = (l * cfg.hop) as isize - pad;
        for (m, (b, &w)) in buf.iter_mut().zip(window).enumerate() {
            let idx = start + m as isize;
            if idx >= 0 && (idx as usize) < n {
                *b = signal.samples[idx as usize].into() * w;
            }
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, z) in buf.iter().enumerate() {
            out.data[k * frames + l] = *z;
        }
    }
    Ok(out)
}

/// Weighted overlap-add inverse STFT, complex-valued.
pub fn istft(spec: &ComplexSpectrogram) -> Result<ComplexBuffer> {
    let cfg = spec.config();
    let dev = cfg.cola_deviation();
    if dev > COLA_TOLERANCE {
        return Err(Error::NotCola { deviation: dev });
    }
    let gain = cfg.cola_gain();
    let k_bins = spec.bins();
    let frames = spec.frames();
    let n = spec.signal_len();
    let pad = cfg.pad() as isize;
    let window = cfg.synthesis_window();
    let ifft = FftPlanner::new().plan_fft_inverse(k_bins);
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); k_bins];
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let scale = 1.0 / (k_bins as f64 * gain);

    for l in 0..frames {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = spec.data[k * frames + l];
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = (l * cfg.hop) as isize - pad;
        for (m, (&b, &w)) in buf.iter().zip(window).enumerate() {
            let idx = start + m as isize;
            if idx >= 0 && (idx as usize) < n {
                out[idx as usize] += b * (w * scale);
            }
        }
    }
    Ok(AudioBuffer::new(out, cfg.sample_rate))
}

/// Inverse STFT keeping only the real part of the reconstruction.
pub fn istft_real(spec: &ComplexSpectrogram) -> Result<AudioBuffer<f64>> {
    Ok(istft(spec)?.real_part())
}
