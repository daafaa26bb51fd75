//! Reference preprocessors and the masking stage.
//!
//! * identity: the noisy spectrogram unchanged.
//! * Wiener: spectral gain from a minimum-statistics noise tracker.
//! * masks: real gains applied cell by cell, including an oracle ideal
//!   ratio mask that stands in for a trained mask estimator.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::stft::ComplexSpectrogram;

/// Returns the input unchanged.
pub fn identity_preproc(x: &ComplexSpectrogram) -> ComplexSpectrogram {
    x.clone()
}

/// Nonnegative real gains on a `K × L` grid, bin-major like
/// [`ComplexSpectrogram`].
#[derive(Debug, Clone, PartialEq)]
pub struct RealMask {
    data: Vec<f64>,
    bins: usize,
    frames: usize,
}

impl RealMask {
    pub fn new(data: Vec<f64>, bins: usize, frames: usize) -> Result<Self> {
        if data.len() != bins * frames {
            return Err(Error::DimensionMismatch {
                expected: bins * frames,
                got: data.len(),
            });
        }
        if let Some(bad) = data.iter().find(|&&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mask entries must be finite and nonnegative, found {bad}"
            )));
        }
        Ok(Self { data, bins, frames })
    }

    pub fn constant(value: f64, bins: usize, frames: usize) -> Result<Self> {
        Self::new(vec![value; bins * frames], bins, frames)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.bins, self.frames)
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.data[k * self.frames + l]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// `D̂ = M ⊙ Y`.
pub fn apply_mask(y: &ComplexSpectrogram, mask: &RealMask) -> Result<ComplexSpectrogram> {
    if y.shape() != mask.shape() {
        return Err(Error::ShapeMismatch {
            expected: y.shape(),
            got: mask.shape(),
        });
    }
    y.with_data(
        y.data()
            .iter()
            .zip(&mask.data)
            .map(|(z, m)| z * *m)
            .collect(),
    )
}

/// Ideal ratio mask `sqrt(|S|² / (|S|² + |N|² + ε))` with `ε` a tiny
/// fraction of `|S|²`, so entries stay in `[0, 1)`.
pub fn oracle_irm(
    clean: &ComplexSpectrogram,
    residual_noise: &ComplexSpectrogram,
) -> Result<RealMask> {
    clean.check_same_shape(residual_noise)?;
    let data = clean
        .data()
        .iter()
        .zip(residual_noise.data())
        .map(|(s, n)| {
            let ps = s.norm_sqr();
            let eps = 1e-12 * ps + f64::MIN_POSITIVE;
            (ps / (ps + n.norm_sqr() + eps)).sqrt()
        })
        .collect();
    RealMask::new(data, clean.bins(), clean.frames())
}

/// Parameters of the minimum-statistics noise tracker.
#[derive(Debug, Clone, PartialEq)]
pub struct MinStatsParams {
    /// Length of the sliding minimum window in seconds.
    pub window_sec: f64,
    /// Recursive smoothing of the noisy periodogram.
    pub smooth_alpha: f64,
    /// Multiplier compensating the downward bias of the minimum.
    pub bias: f64,
}

impl Default for MinStatsParams {
    fn default() -> Self {
        Self {
            window_sec: 1.5,
            smooth_alpha: 0.85,
            bias: 1.5,
        }
    }
}

impl MinStatsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_sec > 0.0) {
            return Err(Error::InvalidParameter(
                "window_sec must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.smooth_alpha) {
            return Err(Error::InvalidParameter(
                "smooth_alpha must lie in [0, 1)".into(),
            ));
        }
        if !(self.bias > 0.0) {
            return Err(Error::InvalidParameter("bias must be positive".into()));
        }
        Ok(())
    }
}

/// Tracked noise power per cell, bin-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePsdEstimate {
    pub power: Vec<f64>,
    pub bins: usize,
    pub frames: usize,
    pub params: MinStatsParams,
}

impl NoisePsdEstimate {
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.power[k * self.frames + l]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.bins, self.frames)
    }
}

/// `P(k,ℓ) = α·P(k,ℓ-1) + (1-α)·|x(k,ℓ)|²`, started at `P(k,0) = |x(k,0)|²`.
pub fn smoothed_power(x: &ComplexSpectrogram, alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.data().len());
    for k in 0..x.bins() {
        let mut p = None;
        for z in x.bin(k) {
            let v = z.norm_sqr();
            let next = match p {
                None => v,
                Some(prev) => alpha * prev + (1.0 - alpha) * v,
            };
            p = Some(next);
            out.push(next);
        }
    }
    out
}

/// Minimum-statistics noise estimate: `bias ×` the minimum of the smoothed
/// periodogram over the trailing `window_sec`.
pub fn min_stats_noise_psd(
    noisy: &ComplexSpectrogram,
    params: &MinStatsParams,
) -> Result<NoisePsdEstimate> {
    params.validate()?;
    let window = (params.window_sec * noisy.config().frame_rate())
        .round()
        .max(1.0) as usize;
    if noisy.frames() < window {
        return Err(Error::TooShort {
            len: noisy.frames(),
            needed: window,
        });
    }
    let smoothed = smoothed_power(noisy, params.smooth_alpha);
    let frames = noisy.frames();
    let mut power = Vec::with_capacity(smoothed.len());
    let mut deque: VecDeque<usize> = VecDeque::with_capacity(window);
    for k in 0..noisy.bins() {
        let row = &smoothed[k * frames..(k + 1) * frames];
        deque.clear();
        for l in 0..frames {
            while deque.back().is_some_and(|&j| row[j] >= row[l]) {
                deque.pop_back();
            }
            deque.push_back(l);
            if deque.front().is_some_and(|&j| j + window <= l) {
                deque.pop_front();
            }
            power.push(params.bias * row[deque[0]]);
        }
    }
    Ok(NoisePsdEstimate {
        power,
        bins: noisy.bins(),
        frames,
        params: params.clone(),
    })
}

/// Default Wiener gain floor, -25 dB.
pub fn default_gain_floor() -> f64 {
    10f64.powf(-25.0 / 20.0)
}

/// `G = max(1 - N/P, floor)` with `P` the noisy power smoothed by the
/// tracker's constant.
pub fn wiener_gain(
    noisy: &ComplexSpectrogram,
    noise: &NoisePsdEstimate,
    gain_floor: f64,
) -> Result<RealMask> {
    if !(gain_floor > 0.0 && gain_floor < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gain floor must lie in (0, 1), got {gain_floor}"
        )));
    }
    if noisy.shape() != noise.shape() {
        return Err(Error::ShapeMismatch {
            expected: noisy.shape(),
            got: noise.shape(),
        });
    }
    let smoothed = smoothed_power(noisy, noise.params.smooth_alpha);
    let data = smoothed
        .iter()
        .zip(&noise.power)
        .map(|(&p, &n)| {
            if n <= 0.0 {
                1.0
            } else if p <= 0.0 {
                gain_floor
            } else {
                (1.0 - n / p).clamp(gain_floor, 1.0)
            }
        })
        .collect();
    RealMask::new(data, noisy.bins(), noisy.frames())
}

/// Wiener-filtered spectrogram.
pub fn wiener_apply(
    noisy: &ComplexSpectrogram,
    noise: &NoisePsdEstimate,
    gain_floor: f64,
) -> Result<ComplexSpectrogram> {
    apply_mask(noisy, &wiener_gain(noisy, noise, gain_floor)?)
}
