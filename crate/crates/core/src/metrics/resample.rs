//! Rational-factor polyphase resampling with a Kaiser-windowed sinc filter.

use std::f64::consts::PI;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Low-pass prototype: 60 dB stopband rejection, transition width a tenth
/// of the cutoff. Unit DC gain per polyphase branch after upsampling.
fn design_filter(up: usize, down: usize) -> Vec<f64> {
    let cutoff = 1.0 / (2.0 * up.max(down) as f64);
    let roll_off = cutoff / 10.0;
    let rejection_db = 60.0;
    let half = ((rejection_db - 8.0) / (28.714 * roll_off)).ceil() as isize;
    let beta = 0.1102 * (rejection_db - 8.7);
    let n = (2 * half + 1) as f64;
    let i0_beta = bessel_i0(beta);
    (-half..=half)
        .map(|t| {
            let ideal = 2.0 * up as f64 * cutoff * sinc(2.0 * cutoff * t as f64);
            let pos = (t + half) as f64;
            let ratio = 2.0 * pos / (n - 1.0) - 1.0;
            let kaiser = bessel_i0(beta * (1.0 - ratio * ratio).max(0.0).sqrt()) / i0_beta;
            ideal * kaiser
        })
        .collect()
}

/// Resamples `x` from `from_rate` to `to_rate`. The output has
/// `ceil(len·to/from)` samples and no group delay.
pub fn resample(x: &[f64], from_rate: u32, to_rate: u32) -> Vec<f64> {
    if from_rate == to_rate {
        return x.to_vec();
    }
    let g = gcd(from_rate as u64, to_rate as u64);
    let up = (to_rate as u64 / g) as usize;
    let down = (from_rate as u64 / g) as usize;
    let h = design_filter(up, down);
    let half = (h.len() - 1) / 2;
    let n_up = x.len() * up;
    let n_out = n_up.div_ceil(down);
    (0..n_out)
        .map(|m| {
            // y[m] = Σ_j h[j] · x_up[m·down + half - j], x_up nonzero at multiples of `up`
            let centre = (m * down + half) as isize;
            let mut acc = 0.0;
            let first = (centre - (h.len() as isize - 1)).max(0);
            let mut i = first + (up as isize - first % up as isize) % up as isize;
            while i <= centre && (i as usize) < n_up {
                acc += h[(centre - i) as usize] * x[i as usize / up];
                i += up as isize;
            }
            acc
        })
        .collect()
}
