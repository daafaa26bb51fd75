//! Monte Carlo checks of the statistical behaviour of the generator,
//! the coherence measure, the periodogram and STOI.

mod common;

use common::{gaussian, harmonic_mixture, mean, FS};
use cyclobeam::cyclic::{spectral_coherence, welch_periodogram};
use cyclobeam::metrics::stoi;
use cyclobeam::noise::{synth_harmonic_cs_noise, white_gaussian_noise, HarmonicNoiseParams};
use cyclobeam::speech::speech_proxy;
use cyclobeam::stft::StftConfig;
use cyclobeam::AudioBuffer;

fn generator_coherence(correlation: f64, seeds: u64) -> f64 {
    let cfg = StftConfig::speech_16k();
    let values: Vec<f64> = (0..seeds)
        .map(|seed| {
            let f0 = 60.0 + 4.5 * seed as f64;
            let params = HarmonicNoiseParams {
                f0,
                correlation,
                seed: 70 + seed,
                ..HarmonicNoiseParams::default()
            };
            let x = synth_harmonic_cs_noise(10.0, FS, &params).unwrap();
            spectral_coherence(&x, f0, &cfg).unwrap()
        })
        .collect();
    mean(&values)
}

#[test]
fn correlated_envelopes_are_coherent_at_f0() {
    let c = generator_coherence(0.9, 20);
    assert!(c >= 0.5, "mean coherence {c}");
}

#[test]
fn independent_envelopes_are_not() {
    let c = generator_coherence(0.0, 20);
    assert!(c <= 0.15, "mean coherence {c}");
}

#[test]
fn white_noise_has_low_coherence() {
    let cfg = StftConfig::speech_16k();
    for seed in 0..5 {
        let x = white_gaussian_noise(10 * FS as usize, FS, seed);
        for alpha in [73.0, 100.0, 141.5] {
            let c = spectral_coherence(&x, alpha, &cfg).unwrap();
            assert!(c < 0.1, "seed {seed}, alpha {alpha}: {c}");
        }
    }
}

#[test]
fn generator_is_deterministic() {
    let p = HarmonicNoiseParams {
        seed: 9,
        ..HarmonicNoiseParams::default()
    };
    let a = synth_harmonic_cs_noise(3.0, FS, &p).unwrap();
    let b = synth_harmonic_cs_noise(3.0, FS, &p).unwrap();
    assert_eq!(a, b);
    assert!((a.power() - 1.0).abs() < 1e-12);
}

#[test]
fn welch_of_white_noise_is_flat_at_its_density() {
    // Unit-variance white noise has one-sided density 2/fs.
    let x = AudioBuffer::new(gaussian(20 * FS as usize, 5), FS);
    let psd = welch_periodogram(&x, 4096, 0.5).unwrap();
    let interior = &psd.power[8..psd.power.len() - 8];
    let level = mean(interior) * FS as f64 / 2.0;
    assert!((level - 1.0).abs() < 0.03, "level {level}");
    // About 155 averaged segments: per-bin spread ≈ 1/sqrt(155).
    let spread = (interior
        .iter()
        .map(|p| (p * FS as f64 / 2.0 - level).powi(2))
        .sum::<f64>()
        / interior.len() as f64)
        .sqrt();
    assert!(spread < 0.12, "spread {spread}");
}

#[test]
fn stoi_of_clean_speech_against_itself() {
    let m = harmonic_mixture(3, 0.0, 4.0, 0.9);
    let score = stoi(&m.clean, &m.clean, FS).unwrap();
    assert!(score >= 0.999, "{score}");
}

#[test]
fn stoi_of_white_noise_estimate_is_low() {
    for seed in 0..10 {
        let clean = speech_proxy(4.0, FS, 40 + seed);
        let noise = white_gaussian_noise(clean.len(), FS, 80 + seed);
        let score = stoi(&noise, &clean, FS).unwrap();
        assert!(score <= 0.25, "utterance {seed}: {score}");
    }
}

#[test]
fn stoi_increases_with_snr() {
    let scores: Vec<f64> = [-10.0, 0.0, 10.0]
        .iter()
        .map(|&snr| {
            let vals: Vec<f64> = (0..4)
                .map(|s| {
                    let m = harmonic_mixture(100 + s, snr, 3.0, 0.9);
                    stoi(&m.noisy, &m.clean, FS).unwrap()
                })
                .collect();
            mean(&vals)
        })
        .collect();
    assert!(scores.windows(2).all(|w| w[0] < w[1]), "{scores:?}");
}
