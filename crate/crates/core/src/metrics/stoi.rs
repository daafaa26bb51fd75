//! Short-time objective intelligibility (original, non-extended variant).

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::resample::resample;
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

const FS: u32 = 10_000;
const FRAME: usize = 256;
const NFFT: usize = 512;
const BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
/// Frames per intermediate intelligibility segment (384 ms).
const SEGMENT: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

/// Hann window without its zero end points.
fn window() -> Vec<f64> {
    let n = FRAME + 2;
    (1..=FRAME)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Drops frames more than 40 dB below the loudest frame of the reference
/// and overlap-adds the survivors of both signals.
fn remove_silent_frames(x: &[f64], y: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hop = FRAME / 2;
    let starts: Vec<usize> = (0..x.len().saturating_sub(FRAME)).step_by(hop).collect();
    let energy: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let norm = x[s..s + FRAME]
                .iter()
                .zip(w)
                .map(|(v, w)| (v * w).powi(2))
                .sum::<f64>()
                .sqrt();
            20.0 * (norm + EPS).log10()
        })
        .collect();
    let loudest = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energy)
        .filter(|(_, &e)| loudest - DYN_RANGE_DB - e < 0.0)
        .map(|(&s, _)| s)
        .collect();
    let out_len = if kept.is_empty() {
        0
    } else {
        (kept.len() - 1) * hop + FRAME
    };
    let mut xs = vec![0.0; out_len];
    let mut ys = vec![0.0; out_len];
    for (i, &s) in kept.iter().enumerate() {
        for m in 0..FRAME {
            xs[i * hop + m] += x[s + m] * w[m];
            ys[i * hop + m] += y[s + m] * w[m];
        }
    }
    (xs, ys)
}

/// Magnitude spectra, frame-major, `NFFT/2 + 1` bins per frame.
fn spectra(x: &[f64], w: &[f64]) -> Vec<Vec<f64>> {
    let hop = FRAME / 2;
    let fft = FftPlanner::new().plan_fft_forward(NFFT);
    (0..x.len().saturating_sub(FRAME))
        .step_by(hop)
        .map(|s| {
            let mut buf = vec![Complex64::new(0.0, 0.0); NFFT];
            for m in 0..FRAME {
                buf[m] = Complex64::new(x[s + m] * w[m], 0.0);
            }
            fft.process(&mut buf);
            buf[..NFFT / 2 + 1].iter().map(|z| z.norm_sqr()).collect()
        })
        .collect()
}

/// Index ranges of the one-third octave bands on the FFT grid.
fn third_octave_bands() -> Vec<(usize, usize)> {
    let bins = NFFT / 2 + 1;
    let freqs: Vec<f64> = (0..bins)
        .map(|k| k as f64 * FS as f64 / NFFT as f64)
        .collect();
    let nearest = |f: f64| {
        (0..bins)
            .min_by(|&a, &b| (freqs[a] - f).powi(2).total_cmp(&(freqs[b] - f).powi(2)))
            .unwrap()
    };
    (0..BANDS)
        .map(|b| {
            let k = b as f64;
            let lo = MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

fn band_envelopes(spec: &[Vec<f64>], bands: &[(usize, usize)]) -> Vec<Vec<f64>> {
    bands
        .iter()
        .map(|&(lo, hi)| {
            spec.iter()
                .map(|frame| frame[lo..hi].iter().sum::<f64>().sqrt())
                .collect()
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// STOI of `estimate` against `reference`, both at `fs`. Signals are
/// resampled to 10 kHz internally.
pub fn stoi(estimate: &AudioBuffer<f64>, reference: &AudioBuffer<f64>, fs: u32) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            got: estimate.len(),
        });
    }
    let needed = (0.384 * fs as f64).ceil() as usize;
    if reference.len() < needed {
        return Err(Error::TooShort {
            len: reference.len(),
            needed,
        });
    }
    let x = resample(&reference.samples, fs, FS);
    let y = resample(&estimate.samples, fs, FS);
    let w = window();
    let (x, y) = remove_silent_frames(&x, &y, &w);
    let xs = spectra(&x, &w);
    let ys = spectra(&y, &w);
    if xs.len() < SEGMENT {
        return Err(Error::TooShort {
            len: xs.len(),
            needed: SEGMENT,
        });
    }
    let bands = third_octave_bands();
    let xb = band_envelopes(&xs, &bands);
    let yb = band_envelopes(&ys, &bands);

    let clip = 10f64.powf(-BETA_DB / 20.0);
    let segments = xs.len() - SEGMENT + 1;
    let mut total = 0.0;
    let mut xseg = vec![0.0; SEGMENT];
    let mut yseg = vec![0.0; SEGMENT];
    for m in 0..segments {
        for b in 0..BANDS {
            xseg.copy_from_slice(&xb[b][m..m + SEGMENT]);
            yseg.copy_from_slice(&yb[b][m..m + SEGMENT]);
            let scale = norm(&xseg) / (norm(&yseg) + EPS);
            for (yv, xv) in yseg.iter_mut().zip(&xseg) {
                *yv = (*yv * scale).min(xv * (1.0 + clip));
            }
            let xm = xseg.iter().sum::<f64>() / SEGMENT as f64;
            let ym = yseg.iter().sum::<f64>() / SEGMENT as f64;
            xseg.iter_mut().for_each(|v| *v -= xm);
            yseg.iter_mut().for_each(|v| *v -= ym);
            let xn = norm(&xseg) + EPS;
            let yn = norm(&yseg) + EPS;
            total += xseg
                .iter()
                .zip(&yseg)
                .map(|(a, b)| (a / xn) * (b / yn))
                .sum::<f64>();
        }
    }
    Ok(total / (segments * BANDS) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_layout() {
        let bands = third_octave_bands();
        assert_eq!(bands.len(), 15);
        // lowest band edge near 150 / 2^(1/6) Hz on a 19.5 Hz grid
        assert_eq!(bands[0].0, 7);
        assert!(bands.iter().all(|&(lo, hi)| lo < hi));
        assert!(bands.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(bands[14].1 <= NFFT / 2 + 1);
    }

    #[test]
    fn too_short() {
        let x = AudioBuffer::new(vec![0.1; 1000], 16_000);
        assert!(matches!(stoi(&x, &x, 16_000), Err(Error::TooShort { .. })));
    }
}
