//! Random-harmonic cyclostationary noise and SNR mixing.
//!
//! Each harmonic `p` of the fundamental carries its own slowly varying
//! random envelope. Envelopes share a common factor,
//! `a_p = √β·g₀ + √(1-β)·g_p`, so any two harmonics have envelope correlation
//! `β`. It is this correlation that makes a harmonic predictable from its
//! frequency-shifted neighbours.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::audio::{mean_power, AudioBuffer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicNoiseParams {
    /// Fundamental frequency in Hz.
    pub f0: f64,
    pub num_harmonics: usize,
    /// Pairwise envelope correlation between harmonics, in [0, 1].
    pub correlation: f64,
    /// Cutoff of the envelope low-pass filters in Hz.
    pub envelope_rate: f64,
    /// Harmonic `p` is scaled by `p^(-amplitude_decay)`.
    pub amplitude_decay: f64,
    pub seed: u64,
}

impl Default for HarmonicNoiseParams {
    fn default() -> Self {
        Self {
            f0: 100.0,
            num_harmonics: 10,
            correlation: 0.9,
            envelope_rate: 5.0,
            amplitude_decay: 0.5,
            seed: 0,
        }
    }
}

impl HarmonicNoiseParams {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if self.num_harmonics == 0 {
            return Err(Error::InvalidParameter("need at least one harmonic".into()));
        }
        if !(self.f0 > 0.0) || self.f0 * self.num_harmonics as f64 >= nyquist {
            return Err(Error::InvalidParameter(format!(
                "harmonics of {} Hz up to order {} exceed the Nyquist frequency {nyquist} Hz",
                self.f0, self.num_harmonics
            )));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(Error::InvalidParameter(format!(
                "correlation must lie in [0, 1], got {}",
                self.correlation
            )));
        }
        if !(self.envelope_rate > 0.0) || self.envelope_rate >= nyquist {
            return Err(Error::InvalidParameter(format!(
                "envelope rate must lie in (0, {nyquist}) Hz, got {}",
                self.envelope_rate
            )));
        }
        if !self.amplitude_decay.is_finite() {
            return Err(Error::InvalidParameter(
                "amplitude decay must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Zero-mean Gaussian noise low-passed by two cascaded one-pole sections.
fn lowpass_gaussian(
    rng: &mut ChaCha8Rng,
    len: usize,
    warmup: usize,
    cutoff: f64,
    fs: f64,
) -> Vec<f64> {
    let a = (-TAU * cutoff / fs).exp();
    let b = 1.0 - a;
    // unit output variance for the two-stage cascade
    let gain = ((1.0 + a).powi(3) / ((1.0 - a) * (1.0 + a * a))).sqrt();
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut out = Vec::with_capacity(len);
    for i in 0..warmup + len {
        let w: f64 = rng.sample(StandardNormal);
        s1 = a * s1 + b * w;
        s2 = a * s2 + b * s1;
        if i >= warmup {
            out.push(s2 * gain);
        }
    }
    out
}

/// Harmonic cyclostationary noise, normalized to unit power.
pub fn synth_harmonic_cs_noise(
    duration_secs: f64,
    sample_rate: u32,
    params: &HarmonicNoiseParams,
) -> Result<AudioBuffer<f64>> {
    params.validate(sample_rate)?;
    let fs = sample_rate as f64;
    let len = (duration_secs * fs).round() as usize;
    if len == 0 {
        return Err(Error::EmptySignal);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let phases: Vec<f64> = (0..params.num_harmonics)
        .map(|_| rng.random_range(0.0..TAU))
        .collect();
    let warmup = (4.0 * fs / params.envelope_rate).ceil() as usize;
    let shared = lowpass_gaussian(&mut rng, len, warmup, params.envelope_rate, fs);
    let (ws, wi) = (params.correlation.sqrt(), (1.0 - params.correlation).sqrt());

    let mut out = vec![0.0; len];
    for (p, &phase) in phases.iter().enumerate() {
        let order = (p + 1) as f64;
        let own = lowpass_gaussian(&mut rng, len, warmup, params.envelope_rate, fs);
        let scale = order.powf(-params.amplitude_decay);
        let cycles = order * params.f0 / fs;
        for (n, o) in out.iter_mut().enumerate() {
            let envelope = ws * shared[n] + wi * own[n];
            let turns = (cycles * n as f64).rem_euclid(1.0);
            *o += scale * envelope * (TAU * turns + phase).cos();
        }
    }
    let power = mean_power(&out);
    if power > 0.0 {
        let g = power.sqrt().recip();
        out.iter_mut().for_each(|s| *s *= g);
    }
    Ok(AudioBuffer::new(out, sample_rate))
}

/// Unit-variance white Gaussian noise.
pub fn white_gaussian_noise(len: usize, sample_rate: u32, seed: u64) -> AudioBuffer<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AudioBuffer::new(
        (0..len).map(|_| rng.sample(StandardNormal)).collect(),
        sample_rate,
    )
}

/// Target SNR of a mixture, measured over the whole utterance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixSpec {
    pub snr_db: f64,
}

/// Scales `noise` so that `10·log10(P_speech / P_noise) = snr_db` and adds
/// it to `speech`. Returns the mixture and the scaled noise.
pub fn mix_at_snr(
    speech: &AudioBuffer<f64>,
    noise: &AudioBuffer<f64>,
    spec: MixSpec,
) -> Result<(AudioBuffer<f64>, AudioBuffer<f64>)> {
    if !spec.snr_db.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "SNR must be finite, got {}",
            spec.snr_db
        )));
    }
    if speech.len() != noise.len() {
        return Err(Error::DimensionMismatch {
            expected: speech.len(),
            got: noise.len(),
        });
    }
    if speech.sample_rate != noise.sample_rate {
        return Err(Error::SampleRateMismatch {
            signal: noise.sample_rate,
            expected: speech.sample_rate,
        });
    }
    let ps = speech.power();
    let pn = noise.power();
    if !(ps > 0.0) || !(pn > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    let gain = (ps / (pn * 10f64.powf(spec.snr_db / 10.0))).sqrt();
    let scaled = noise.scaled(gain);
    let mixture = AudioBuffer::new(
        speech
            .samples
            .iter()
            .zip(&scaled.samples)
            .map(|(s, n)| s + n)
            .collect(),
        speech.sample_rate,
    );
    Ok((mixture, scaled))
}

/// SNR in dB of `speech` against `noise` by direct power computation.
pub fn measured_snr_db(speech: &AudioBuffer<f64>, noise: &AudioBuffer<f64>) -> f64 {
    10.0 * (speech.power() / noise.power()).log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let p = HarmonicNoiseParams {
            seed: 7,
            ..Default::default()
        };
        let a = synth_harmonic_cs_noise(1.0, 16_000, &p).unwrap();
        let b = synth_harmonic_cs_noise(1.0, 16_000, &p).unwrap();
        assert_eq!(a, b);
        let c =
            synth_harmonic_cs_noise(1.0, 16_000, &HarmonicNoiseParams { seed: 8, ..p }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unit_power() {
        let x = synth_harmonic_cs_noise(2.0, 16_000, &HarmonicNoiseParams::default()).unwrap();
        assert!((x.power() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_harmonics_above_nyquist() {
        let p = HarmonicNoiseParams {
            f0: 900.0,
            num_harmonics: 10,
            ..Default::default()
        };
        assert!(synth_harmonic_cs_noise(1.0, 16_000, &p).is_err());
        let p = HarmonicNoiseParams {
            correlation: 1.5,
            ..Default::default()
        };
        assert!(synth_harmonic_cs_noise(1.0, 16_000, &p).is_err());
    }

    #[test]
    fn envelope_filter_has_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = lowpass_gaussian(&mut rng, 400_000, 20_000, 50.0, 16_000.0);
        let var = mean_power(&g);
        assert!((var - 1.0).abs() < 0.1, "variance {var}");
    }

    #[test]
    fn mixing_hits_target_snr() {
        let s = white_gaussian_noise(8000, 16_000, 1);
        let n = white_gaussian_noise(8000, 16_000, 2).scaled(3.0);
        for snr in [0.0, -20.0, 7.5] {
            let (mix, scaled) = mix_at_snr(&s, &n, MixSpec { snr_db: snr }).unwrap();
            let ratio = s.power() / scaled.power();
            assert!((ratio / 10f64.powf(snr / 10.0) - 1.0).abs() < 1e-10);
            for ((m, n), s) in mix.samples.iter().zip(&scaled.samples).zip(&s.samples) {
                // exact up to the rounding of the addition
                assert!(((m - n) - s).abs() <= 2.0 * f64::EPSILON * n.abs().max(s.abs()));
            }
        }
    }

    #[test]
    fn mixing_rejects_silence() {
        let s = AudioBuffer::zeros(100, 16_000);
        let n = white_gaussian_noise(100, 16_000, 2);
        assert!(matches!(
            mix_at_snr(&s, &n, MixSpec { snr_db: 0.0 }),
            Err(Error::ZeroEnergy)
        ));
        assert!(mix_at_snr(&n, &s, MixSpec { snr_db: 0.0 }).is_err());
    }
}
