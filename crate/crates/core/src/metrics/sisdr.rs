use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Magnitude bound on reported SI-SDR values.
pub const SI_SDR_CAP_DB: f64 = 100.0;

/// Scale-invariant signal-to-distortion ratio in dB.
///
/// The estimate is projected onto the reference, `s = (⟨e,r⟩/‖r‖²)·r`, and
/// the result is `10·log10(‖s‖² / ‖e - s‖²)`, clamped to ±100 dB.
pub fn si_sdr(estimate: &AudioBuffer<f64>, reference: &AudioBuffer<f64>) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            got: estimate.len(),
        });
    }
    let e = &estimate.samples;
    let r = &reference.samples;
    let rr: f64 = r.iter().map(|v| v * v).sum();
    if !(rr > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    let er: f64 = e.iter().zip(r).map(|(a, b)| a * b).sum();
    let scale = er / rr;
    let (target, residual) = e.iter().zip(r).fold((0.0, 0.0), |(t, n), (&ev, &rv)| {
        let s = scale * rv;
        (t + s * s, n + (ev - s) * (ev - s))
    });
    if target == 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    if residual == 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / residual).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}
