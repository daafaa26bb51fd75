//! Cyclic minimum-power distortionless-response (cMPDR) spectral beamformer.
//!
//! For every frequency bin the beamformer tracks the covariance of the
//! augmented vector of frequency-shifted copies,
//!
//! ```text
//! S(ℓ) = β·S(ℓ-1) + (1-β)·x(ℓ)·x(ℓ)^H
//! ```
//!
//! and emits `y = w^H x` with
//!
//! ```text
//! w = S⁻¹e₁ / (e₁^H S⁻¹ e₁)
//! ```
//!
//! the minimizer of `w^H S w` under `w^H e₁ = 1`. The unshifted channel passes
//! with unit gain while components that are correlated with shifted copies of
//! the input (harmonic noise) are cancelled.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::modulation::AugmentedSpectrogram;
use crate::stft::ComplexSpectrogram;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Default recursive smoothing constant.
pub const DEFAULT_BETA_X: f64 = 0.95;

/// Tunables of the beamformer.
#[derive(Debug, Clone, PartialEq)]
pub struct CmpdrParams {
    /// Recursive smoothing constant of the covariance, in (0, 1).
    pub beta_x: f64,
    /// Diagonal loading relative to `trace(S)/C`, applied at solve time only.
    pub loading: f64,
    /// Initial covariance `δ·I` with `δ = init_scale ×` mean reference-channel
    /// power over the first `init_frames` frames of the bin.
    pub init_scale: f64,
    pub init_frames: usize,
    /// Recompute weights every `weight_stride` frames.
    pub weight_stride: usize,
}

impl Default for CmpdrParams {
    fn default() -> Self {
        Self {
            beta_x: DEFAULT_BETA_X,
            loading: 1e-6,
            init_scale: 1e-3,
            init_frames: 10,
            weight_stride: 1,
        }
    }
}

impl CmpdrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_x > 0.0 && self.beta_x < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "beta_x must lie in (0, 1), got {}",
                self.beta_x
            )));
        }
        if !(self.loading >= 0.0) || !(self.init_scale >= 0.0) {
            return Err(Error::InvalidParameter(
                "loading and init_scale must be nonnegative".into(),
            ));
        }
        if self.weight_stride == 0 || self.init_frames == 0 {
            return Err(Error::InvalidParameter(
                "weight_stride and init_frames must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-bin `C × C` spectral covariance of the augmented vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCovariance {
    matrix: Matrix,
}

impl SpectralCovariance {
    pub fn new(matrix: Matrix) -> Self {
        Self { matrix }
    }

    pub fn scaled_identity(dim: usize, delta: f64) -> Self {
        Self::new(Matrix::scaled_identity(dim, delta))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// `S ← β·S + (1-β)·x·x^H`.
    pub fn update(&mut self, x: &[Complex64], beta_x: f64) -> Result<()> {
        let n = self.dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        let a = 1.0 - beta_x;
        let data = self.matrix.as_mut_slice();
        for i in 0..n {
            let xi = x[i] * a;
            for j in 0..n {
                let idx = i * n + j;
                data[idx] = data[idx] * beta_x + xi * x[j].conj();
            }
        }
        Ok(())
    }

    /// Functional form of [`update`](Self::update).
    pub fn updated(&self, x: &[Complex64], beta_x: f64) -> Result<Self> {
        let mut next = self.clone();
        next.update(x, beta_x)?;
        Ok(next)
    }
}

/// Distortionless weight vector for one bin and frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerWeights {
    pub w: Vec<Complex64>,
    /// Set when the loaded covariance could not be factorized and the
    /// weights fell back to `e₁`.
    pub passthrough: bool,
}

impl BeamformerWeights {
    pub fn passthrough(dim: usize) -> Self {
        let mut w = vec![ZERO; dim];
        w[0] = ONE;
        Self {
            w,
            passthrough: true,
        }
    }

    /// `w^H x`.
    pub fn apply(&self, x: &[Complex64]) -> Complex64 {
        self.w.iter().zip(x).map(|(w, x)| w.conj() * x).sum()
    }

    /// `w^H e₁`.
    pub fn reference_response(&self) -> Complex64 {
        self.w[0].conj()
    }
}

/// Closed-form weights `S⁻¹e₁ / (e₁^H S⁻¹ e₁)`, solved on the loaded copy
/// `S + λI` with `λ = loading·trace(S)/C`.
pub fn solve_weights(cov: &SpectralCovariance, loading: f64) -> BeamformerWeights {
    let dim = cov.dim();
    if dim == 1 {
        return BeamformerWeights {
            w: vec![ONE],
            passthrough: false,
        };
    }
    let m = cov.matrix();
    let lambda = loading * m.trace() / dim as f64;
    let mut e1 = vec![ZERO; dim];
    e1[0] = ONE;
    let Some(a) = m.solve_hermitian(&e1, lambda) else {
        return BeamformerWeights::passthrough(dim);
    };
    // a[0] = e₁^H S⁻¹ e₁ is real and positive for a PD matrix
    let denom = a[0].re;
    if !(denom > 0.0) || !denom.is_finite() {
        return BeamformerWeights::passthrough(dim);
    }
    let mut w: Vec<Complex64> = a.iter().map(|z| z / denom).collect();
    w[0] = ONE;
    BeamformerWeights {
        w,
        passthrough: false,
    }
}

/// Counters and worst-case residuals gathered while processing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CmpdrStats {
    pub frames_solved: usize,
    pub passthrough_frames: usize,
    /// Largest `|w^H e₁ - 1|` over solved frames.
    pub max_constraint_error: f64,
    /// Frames where `w^H S w > e₁^H S e₁ + 1e-9·trace(S)`.
    pub power_violations: usize,
    /// Frames where the covariance failed the Hermitian tolerance.
    pub hermitian_violations: usize,
}

impl CmpdrStats {
    fn merge(&mut self, other: &CmpdrStats) {
        self.frames_solved += other.frames_solved;
        self.passthrough_frames += other.passthrough_frames;
        self.max_constraint_error = self.max_constraint_error.max(other.max_constraint_error);
        self.power_violations += other.power_violations;
        self.hermitian_violations += other.hermitian_violations;
    }
}

/// Final covariance and weight trajectory of every bin.
#[derive(Debug, Clone)]
pub struct CmpdrDiagnostics {
    pub bins: usize,
    pub channels: usize,
    pub frames: usize,
    /// Per bin, row-major `C × C`.
    pub final_covariance: Vec<Vec<Complex64>>,
    /// Per bin, `L × C` weights, frame-major.
    pub weights: Vec<Vec<Complex64>>,
}

/// Magic bytes at the start of a diagnostics sidecar.
pub const DIAGNOSTICS_MAGIC: &[u8; 4] = b"CMPD";

impl CmpdrDiagnostics {
    /// Writes the sidecar layout, all little endian:
    ///
    /// ```text
    /// magic  "CMPD"
    /// u32    version (1)
    /// u64    K (bins), u64 C (channels), u64 L (frames)
    /// for each bin k in 0..K:
    ///     C·C complex64 records   final covariance, row-major
    ///     L·C complex64 records   weights, frame-major
    /// ```
    ///
    /// A complex64 record is two `f32`, real then imaginary.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(DIAGNOSTICS_MAGIC)?;
        out.write_all(&1u32.to_le_bytes())?;
        for v in [self.bins, self.channels, self.frames] {
            out.write_all(&(v as u64).to_le_bytes())?;
        }
        let mut put = |z: &Complex64| -> std::io::Result<()> {
            out.write_all(&(z.re as f32).to_le_bytes())?;
            out.write_all(&(z.im as f32).to_le_bytes())
        };
        for k in 0..self.bins {
            for z in &self.final_covariance[k] {
                put(z)?;
            }
            for z in &self.weights[k] {
                put(z)?;
            }
        }
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Beamformer output together with the same per-frame filters applied to
/// companion inputs (for example the clean signal, to form oracle masks).
#[derive(Debug, Clone)]
pub struct CmpdrOutput {
    pub output: ComplexSpectrogram,
    pub companions: Vec<ComplexSpectrogram>,
    pub stats: CmpdrStats,
    pub diagnostics: Option<CmpdrDiagnostics>,
}

/// Runs the beamformer over every bin and frame.
pub fn process(aug: &AugmentedSpectrogram, params: &CmpdrParams) -> Result<ComplexSpectrogram> {
    Ok(process_with(aug, &[], params, false)?.output)
}

struct BinResult {
    outputs: Vec<Vec<Complex64>>,
    stats: CmpdrStats,
    final_cov: Option<Vec<Complex64>>,
    weights: Option<Vec<Complex64>>,
}

/// Runs the beamformer on `aug` and applies the identical weights to each
/// companion. With `record` set, the final covariance and weight trajectory
/// of every bin are returned as well.
pub fn process_with(
    aug: &AugmentedSpectrogram,
    companions: &[&AugmentedSpectrogram],
    params: &CmpdrParams,
    record: bool,
) -> Result<CmpdrOutput> {
    params.validate()?;
    for comp in companions {
        if comp.num_channels() != aug.num_channels() {
            return Err(Error::DimensionMismatch {
                expected: aug.num_channels(),
                got: comp.num_channels(),
            });
        }
        if comp.shape() != aug.shape() {
            return Err(Error::ShapeMismatch {
                expected: aug.shape(),
                got: comp.shape(),
            });
        }
    }

    let (bins, frames) = aug.shape();
    let dim = aug.num_channels();

    if dim == 1 {
        return Ok(CmpdrOutput {
            output: aug.reference().clone(),
            companions: companions.iter().map(|c| c.reference().clone()).collect(),
            stats: CmpdrStats {
                frames_solved: bins * frames,
                ..CmpdrStats::default()
            },
            diagnostics: record.then(|| CmpdrDiagnostics {
                bins,
                channels: 1,
                frames,
                final_covariance: (0..bins)
                    .map(|k| {
                        let p = aug.reference().bin(k).iter().fold(0.0, |s, z| {
                            params.beta_x * s + (1.0 - params.beta_x) * z.norm_sqr()
                        });
                        vec![Complex64::new(p, 0.0)]
                    })
                    .collect(),
                weights: vec![vec![ONE; frames]; bins],
            }),
        });
    }

    let results: Vec<BinResult> = (0..bins)
        .into_par_iter()
        .map(|k| process_bin(aug, companions, params, k, record))
        .collect();

    let mut output = aug.reference().zeros_like();
    let mut comp_out: Vec<ComplexSpectrogram> = companions
        .iter()
        .map(|c| c.reference().zeros_like())
        .collect();
    let mut stats = CmpdrStats::default();
    let mut final_covariance = Vec::new();
    let mut weights = Vec::new();
    for (k, mut r) in results.into_iter().enumerate() {
        stats.merge(&r.stats);
        output.bin_mut(k).copy_from_slice(&r.outputs[0]);
        for (i, dst) in comp_out.iter_mut().enumerate() {
            dst.bin_mut(k).copy_from_slice(&r.outputs[i + 1]);
        }
        if record {
            final_covariance.push(r.final_cov.take().unwrap_or_default());
            weights.push(r.weights.take().unwrap_or_default());
        }
    }
    Ok(CmpdrOutput {
        output,
        companions: comp_out,
        stats,
        diagnostics: record.then_some(CmpdrDiagnostics {
            bins,
            channels: dim,
            frames,
            final_covariance,
            weights,
        }),
    })
}

fn process_bin(
    aug: &AugmentedSpectrogram,
    companions: &[&AugmentedSpectrogram],
    params: &CmpdrParams,
    k: usize,
    record: bool,
) -> BinResult {
    let dim = aug.num_channels();
    let frames = aug.shape().1;
    let rows: Vec<&[Complex64]> = aug.channels().iter().map(|c| c.bin(k)).collect();
    let comp_rows: Vec<Vec<&[Complex64]>> = companions
        .iter()
        .map(|a| a.channels().iter().map(|c| c.bin(k)).collect())
        .collect();

    let init_n = params.init_frames.min(frames).max(1);
    let init_power = rows[0][..init_n.min(frames)]
        .iter()
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        / init_n as f64;
    let mut cov = SpectralCovariance::scaled_identity(dim, params.init_scale * init_power);

    let mut outputs = vec![vec![ZERO; frames]; companions.len() + 1];
    let mut stats = CmpdrStats::default();
    let mut trajectory = record.then(|| Vec::with_capacity(frames * dim));
    let mut weights = BeamformerWeights::passthrough(dim);
    let mut x = vec![ZERO; dim];

    for l in 0..frames {
        for (c, row) in rows.iter().enumerate() {
            x[c] = row[l];
        }
        cov.update(&x, params.beta_x)
            .expect("augmented vector has one entry per channel");

        if l % params.weight_stride == 0 {
            weights = solve_weights(&cov, params.loading);
            check_frame(&cov, &weights, &mut stats);
        }

        outputs[0][l] = weights.apply(&x);
        for (i, comp) in comp_rows.iter().enumerate() {
            for (c, row) in comp.iter().enumerate() {
                x[c] = row[l];
            }
            outputs[i + 1][l] = weights.apply(&x);
        }
        if let Some(t) = trajectory.as_mut() {
            t.extend_from_slice(&weights.w);
        }
    }

    BinResult {
        outputs,
        stats,
        final_cov: record.then(|| cov.matrix().as_slice().to_vec()),
        weights: trajectory,
    }
}

fn check_frame(cov: &SpectralCovariance, weights: &BeamformerWeights, stats: &mut CmpdrStats) {
    stats.frames_solved += 1;
    if weights.passthrough {
        stats.passthrough_frames += 1;
    }
    let m = cov.matrix();
    let trace = m.trace();
    if m.hermitian_error() > 1e-12 * trace.max(f64::MIN_POSITIVE) {
        stats.hermitian_violations += 1;
    }
    let err = (weights.reference_response() - ONE).norm();
    stats.max_constraint_error = stats.max_constraint_error.max(err);
    let out_power = m.quadratic_form(&weights.w);
    if out_power > m.get(0, 0).re + 1e-9 * trace {
        stats.power_violations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_covariance_gives_e1() {
        for dim in 1..6 {
            let w = solve_weights(&SpectralCovariance::scaled_identity(dim, 1.0), 0.0);
            assert!(!w.passthrough);
            assert_eq!(w.w[0], ONE);
            assert!(w.w[1..].iter().all(|z| z.norm() < 1e-15));
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        let s = SpectralCovariance::new(Matrix::from_row_major(vec![
            c(2.0, 0.0),
            c(1.0, 0.0),
            c(1.0, 0.0),
            c(2.0, 0.0),
        ]));
        let w = solve_weights(&s, 0.0);
        assert!((w.w[0] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((w.w[1] - c(-0.5, 0.0)).norm() < 1e-14);
        assert!((s.matrix().quadratic_form(&w.w) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn singular_falls_back_to_passthrough() {
        let w = solve_weights(&SpectralCovariance::new(Matrix::zeros(3)), 1e-6);
        assert!(w.passthrough);
        assert_eq!(w.w, vec![ONE, ZERO, ZERO]);
    }

    #[test]
    fn zero_update_scales() {
        let mut s = SpectralCovariance::new(Matrix::from_row_major(vec![
            c(2.0, 0.0),
            c(1.0, 1.0),
            c(1.0, -1.0),
            c(3.0, 0.0),
        ]));
        let before = s.clone();
        s.update(&[ZERO, ZERO], 0.95).unwrap();
        for (a, b) in s.matrix().as_slice().iter().zip(before.matrix().as_slice()) {
            assert_eq!(*a, b * 0.95);
        }
        assert!(s.update(&[ZERO], 0.95).is_err());
    }

    #[test]
    fn constant_input_converges_to_outer_product() {
        let x = [c(1.0, 0.5), c(-0.3, 0.2), c(0.1, -0.7)];
        let mut s = SpectralCovariance::new(Matrix::zeros(3));
        for _ in 0..200 {
            s.update(&x, 0.95).unwrap();
        }
        let mut outer = Matrix::zeros(3);
        for i in 0..3 {
            for j in 0..3 {
                outer.set(i, j, x[i] * x[j].conj());
            }
        }
        let diff: f64 = s
            .matrix()
            .as_slice()
            .iter()
            .zip(outer.as_slice())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-4 * outer.norm());
    }

    #[test]
    fn invalid_params() {
        let p = CmpdrParams {
            beta_x: 1.0,
            ..CmpdrParams::default()
        };
        assert!(p.validate().is_err());
        let p = CmpdrParams {
            weight_stride: 0,
            ..CmpdrParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn diagnostics_layout() {
        let d = CmpdrDiagnostics {
            bins: 2,
            channels: 2,
            frames: 3,
            final_covariance: vec![vec![ONE; 4]; 2],
            weights: vec![vec![ONE; 6]; 2],
        };
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"CMPD");
        assert_eq!(buf.len(), 4 + 4 + 24 + 2 * (4 + 6) * 8);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(buf[24..32].try_into().unwrap()), 3);
    }
}
