//! Frequency-shifted signal copies realized by time-domain modulation.
//!
//! Channel `c` of an [`AugmentedSpectrogram`] is the STFT of
//! `x[n]·exp(+j·2π·α_c·n/fs)`, so bin `ω_k` of that channel reads the input
//! spectrum at `ω_k - α_c`. Because the shift happens before windowing it is
//! exact for any `α_c`, including shifts that fall between STFT bins.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;

use crate::audio::{AudioBuffer, ComplexBuffer};
use crate::error::{Error, Result};
use crate::stft::{stft_shared, ComplexSpectrogram, StftConfig};

/// Ordered set of frequency shifts in Hz. The first shift is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationSet {
    shifts: Vec<f64>,
}

impl ModulationSet {
    /// Validates `shifts` against the Nyquist frequency of `sample_rate`.
    pub fn new(shifts: Vec<f64>, sample_rate: u32) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        match shifts.first() {
            None => return Err(Error::InvalidModulationSet("empty set".into())),
            Some(&first) if first != 0.0 => {
                return Err(Error::InvalidModulationSet(format!(
                    "first shift must be 0, got {first}"
                )))
            }
            _ => {}
        }
        for (i, &a) in shifts.iter().enumerate() {
            if !a.is_finite() || a.abs() >= nyquist {
                return Err(Error::ShiftOutOfRange { alpha: a, nyquist });
            }
            if shifts[..i].contains(&a) {
                return Err(Error::InvalidModulationSet(format!("duplicate shift {a}")));
            }
        }
        Ok(Self { shifts })
    }

    /// The set `{0}`.
    pub fn trivial() -> Self {
        Self { shifts: vec![0.0] }
    }

    /// `{0, f0, 2·f0, …, (count-1)·f0}`.
    pub fn harmonic(f0: f64, count: usize, sample_rate: u32) -> Result<Self> {
        Self::new(
            (0..count.max(1)).map(|c| c as f64 * f0).collect(),
            sample_rate,
        )
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    /// Always false; a valid set contains the zero shift.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_trivial(&self) -> bool {
        self.shifts.len() == 1
    }
}

impl fmt::Display for ModulationSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.shifts.iter().map(|a| format!("{a:.4}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Parses a comma-separated list of shifts. Only the ordering and the
/// leading zero are checked here; the Nyquist bound is checked by
/// [`ModulationSet::new`] once the sample rate is known.
impl FromStr for ModulationSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let shifts = s
            .split(',')
            .map(|p| {
                p.trim().parse::<f64>().map_err(|e| {
                    Error::InvalidModulationSet(format!("cannot parse shift {p:?}: {e}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(shifts, u32::MAX)
    }
}

/// Multiplies `signal` by `exp(+j·2π·alpha·n/fs)`.
pub fn modulate<T>(signal: &AudioBuffer<T>, alpha: f64) -> Result<ComplexBuffer>
where
    T: Copy + Into<Complex64>,
{
    let fs = signal.sample_rate as f64;
    let nyquist = fs / 2.0;
    if !alpha.is_finite() || alpha.abs() >= nyquist {
        return Err(Error::ShiftOutOfRange { alpha, nyquist });
    }
    let cycles_per_sample = alpha / fs;
    let samples = signal
        .samples
        .iter()
        .enumerate()
        .map(|(n, &x)| {
            let x: Complex64 = x.into();
            if alpha == 0.0 {
                return x;
            }
            // reduce before scaling so the phase argument stays small
            let turns = (cycles_per_sample * n as f64).rem_euclid(1.0);
            x * Complex64::from_polar(1.0, TAU * turns)
        })
        .collect();
    Ok(AudioBuffer::new(samples, signal.sample_rate))
}

/// Stack of spectrograms of frequency-shifted copies of one input.
#[derive(Debug, Clone)]
pub struct AugmentedSpectrogram {
    channels: Vec<ComplexSpectrogram>,
    modset: ModulationSet,
}

impl AugmentedSpectrogram {
    /// Wraps precomputed channels; all must share one shape.
    pub fn from_channels(channels: Vec<ComplexSpectrogram>, modset: ModulationSet) -> Result<Self> {
        if channels.len() != modset.len() {
            return Err(Error::DimensionMismatch {
                expected: modset.len(),
                got: channels.len(),
            });
        }
        for ch in &channels[1..] {
            channels[0].check_same_shape(ch)?;
        }
        Ok(Self { channels, modset })
    }

    pub fn channels(&self) -> &[ComplexSpectrogram] {
        &self.channels
    }

    pub fn channel(&self, c: usize) -> &ComplexSpectrogram {
        &self.channels[c]
    }

    /// The unshifted reference channel.
    pub fn reference(&self) -> &ComplexSpectrogram {
        &self.channels[0]
    }

    pub fn modset(&self) -> &ModulationSet {
        &self.modset
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.channels[0].shape()
    }

    pub fn into_reference(mut self) -> ComplexSpectrogram {
        self.channels.swap_remove(0)
    }
}

/// Builds the augmented spectrogram: channel `c` is the STFT of the input
/// modulated by the `c`-th shift. Channel 0 is the plain STFT of the input.
pub fn build_augmented(
    signal: &AudioBuffer<f64>,
    modset: &ModulationSet,
    cfg: &StftConfig,
) -> Result<AugmentedSpectrogram> {
    let nyquist = signal.sample_rate as f64 / 2.0;
    if let Some(&bad) = modset.shifts().iter().find(|a| a.abs() >= nyquist) {
        return Err(Error::ShiftOutOfRange {
            alpha: bad,
            nyquist,
        });
    }
    let cfg = Arc::new(cfg.clone());
    let mut channels = Vec::with_capacity(modset.len());
    channels.push(stft_shared(signal, &cfg)?);
    for &alpha in &modset.shifts()[1..] {
        channels.push(stft_shared(&modulate(signal, alpha)?, &cfg)?);
    }
    AugmentedSpectrogram::from_channels(channels, modset.clone())
}
