#![allow(dead_code)]

use cyclobeam::noise::{mix_at_snr, synth_harmonic_cs_noise, HarmonicNoiseParams, MixSpec};
use cyclobeam::speech::speech_proxy;
use cyclobeam::AudioBuffer;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FS: u32 = 16_000;

/// SI-SDR from a least-squares fit of the reference to the estimate,
/// solved by SVD rather than the closed-form projection.
pub fn lstsq_si_sdr(estimate: &[f64], reference: &[f64]) -> f64 {
    let a = DMatrix::from_column_slice(reference.len(), 1, reference);
    let b = DVector::from_column_slice(estimate);
    let gain = a.svd(true, true).solve(&b, 1e-300).unwrap()[0];
    let (mut target, mut resid) = (0.0, 0.0);
    for (e, r) in estimate.iter().zip(reference) {
        target += (gain * r).powi(2);
        resid += (e - gain * r).powi(2);
    }
    10.0 * (target / resid).log10()
}

pub struct Mixture {
    pub clean: AudioBuffer<f64>,
    pub noise: AudioBuffer<f64>,
    pub noisy: AudioBuffer<f64>,
    pub f0: f64,
}

/// Speech proxy plus generator noise with `f0 ~ U(60, 150)` at `snr_db`.
pub fn harmonic_mixture(seed: u64, snr_db: f64, secs: f64, correlation: f64) -> Mixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0 = rng.random_range(60.0..150.0);
    let clean = speech_proxy(secs, FS, rng.random());
    let noise = synth_harmonic_cs_noise(
        secs,
        FS,
        &HarmonicNoiseParams {
            f0,
            num_harmonics: 10,
            correlation,
            seed: rng.random(),
            ..HarmonicNoiseParams::default()
        },
    )
    .unwrap();
    let (noisy, noise) = mix_at_snr(&clean, &noise, MixSpec { snr_db }).unwrap();
    Mixture {
        clean,
        noise,
        noisy,
        f0,
    }
}

pub fn gaussian(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}
