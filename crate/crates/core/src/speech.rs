//! Speech-like test signals.
//!
//! A stand-in for recorded speech when no corpus is at hand: voiced
//! syllables with gliding pitch and formant colouring, short unvoiced
//! bursts, and pauses. It is not speech, but it has the properties the
//! enhancement stages care about: a harmonic spectrum whose pitch differs
//! from the noise, strong syllabic modulation, and silent gaps.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::audio::AudioBuffer;

const PEAK: f64 = 0.5;

/// Magnitude of a resonance with centre `fc` and bandwidth `bw` at `f`.
fn resonance(f: f64, fc: f64, bw: f64) -> f64 {
    let half = bw / 2.0;
    half * half / ((f - fc).powi(2) + half * half)
}

fn formant_gain(f: f64, formants: &[(f64, f64); 3]) -> f64 {
    let spectral_tilt = 1.0 / (1.0 + f / 500.0);
    let shape: f64 = formants
        .iter()
        .zip([1.0, 0.6, 0.3])
        .map(|(&(fc, bw), g)| g * resonance(f, fc, bw))
        .sum();
    spectral_tilt * (0.05 + shape)
}

/// Generates `duration_secs` of speech-like audio peaking at 0.5.
pub fn speech_proxy(duration_secs: f64, sample_rate: u32, seed: u64) -> AudioBuffer<f64> {
    let fs = sample_rate as f64;
    let len = (duration_secs * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; len];
    let max_freq = (fs / 2.0).min(5000.0);

    let mut pos = (rng.random_range(0.05..0.2) * fs) as usize;
    while pos < len {
        let syl_len = ((rng.random_range(0.12..0.32) * fs) as usize).min(len - pos);
        let f_start: f64 = rng.random_range(100.0..250.0);
        let f_end = (f_start * rng.random_range(0.8..1.25)).clamp(90.0, 270.0);
        let formants = [
            (rng.random_range(300.0..850.0), 90.0),
            (rng.random_range(900.0..2300.0), 120.0),
            (rng.random_range(2400.0..3200.0), 180.0),
        ];
        let level: f64 = rng.random_range(0.4..1.0);

        if rng.random_bool(0.3) {
            // Unvoiced onset: differentiated white noise.
            let burst = ((0.04 * fs) as usize).min(len - pos);
            let mut prev = 0.0;
            for i in 0..burst {
                let w: f64 = rng.sample(StandardNormal);
                let env = (PI * i as f64 / burst as f64).sin();
                out[pos + i] += 0.08 * level * env * (w - prev);
                prev = w;
            }
        }

        let num_harm = (max_freq / f_start.max(f_end)) as usize;
        let gains_start: Vec<f64> = (1..=num_harm)
            .map(|p| formant_gain(p as f64 * f_start, &formants))
            .collect();
        let gains_end: Vec<f64> = (1..=num_harm)
            .map(|p| formant_gain(p as f64 * f_end, &formants))
            .collect();
        let phase: Vec<f64> = (0..num_harm).map(|_| rng.random_range(0.0..TAU)).collect();
        let mut f0_phase = 0.0;
        for i in 0..syl_len {
            let t = i as f64 / syl_len as f64;
            let f0 = f_start + (f_end - f_start) * t;
            f0_phase += TAU * f0 / fs;
            let env = (PI * t).sin().powi(2) * level;
            let mut v = 0.0;
            for (p, (&g0, &g1)) in gains_start.iter().zip(&gains_end).enumerate() {
                let g = g0 + (g1 - g0) * t;
                v += g * ((p + 1) as f64 * f0_phase + phase[p]).sin();
            }
            out[pos + i] += env * v;
        }
        pos += syl_len;

        let pause = if rng.random_bool(0.2) {
            rng.random_range(0.25..0.5)
        } else {
            rng.random_range(0.02..0.12)
        };
        pos += (pause * fs) as usize;
    }

    let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|x| *x *= PEAK / peak);
    }
    AudioBuffer::new(out, sample_rate)
}
