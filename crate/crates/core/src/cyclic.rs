//! Estimation of the modulation set from a noisy recording.
//!
//! 1. Welch periodogram of the whole recording.
//! 2. The strongest local maxima become peaks.
//! 3. Pairwise differences between peak frequencies become candidate shifts.
//! 4. Each candidate is refined to the shift that maximizes its spectral
//!    coherence with the unshifted input, within one periodogram bin, and
//!    kept only if that coherence clears a threshold.
//!
//! The shifts are assumed constant over the recording.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::modulation::{modulate, ModulationSet};
use crate::stft::{hann_periodic, stft_shared, ComplexSpectrogram, StftConfig};

/// One-sided power spectral density on a uniform grid starting at 0 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub power: Vec<f64>,
    /// Grid spacing in Hz.
    pub resolution: f64,
}

impl Psd {
    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.resolution
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }
}

/// Welch estimate with a periodic Hann window, density scaling
/// (`∫ PSD df` equals the signal variance).
pub fn welch_periodogram(signal: &AudioBuffer<f64>, seg_len: usize, overlap: f64) -> Result<Psd> {
    if seg_len < 2 {
        return Err(Error::InvalidParameter(format!(
            "segment length must be at least 2, got {seg_len}"
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidParameter(format!(
            "overlap must lie in [0, 1), got {overlap}"
        )));
    }
    if signal.len() < seg_len {
        return Err(Error::TooShort {
            len: signal.len(),
            needed: seg_len,
        });
    }
    let fs = signal.sample_rate as f64;
    let step = ((seg_len as f64 * (1.0 - overlap)).round() as usize).max(1);
    let segments = (signal.len() - seg_len) / step + 1;
    let window = hann_periodic(seg_len);
    let win_energy: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(seg_len);
    let mut buf = vec![Complex64::new(0.0, 0.0); seg_len];
    let half = seg_len / 2 + 1;
    let mut acc = vec![0.0; half];

    for s in 0..segments {
        let start = s * step;
        for (b, (&x, &w)) in buf
            .iter_mut()
            .zip(signal.samples[start..start + seg_len].iter().zip(&window))
        {
            *b = Complex64::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, z) in acc.iter_mut().zip(&buf) {
            *a += z.norm_sqr();
        }
    }

    let scale = 1.0 / (fs * win_energy * segments as f64);
    let power = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            // one-sided: double everything except DC and Nyquist
            let fold = if k == 0 || (seg_len.is_multiple_of(2) && k == seg_len / 2) {
                1.0
            } else {
                2.0
            };
            a * scale * fold
        })
        .collect();
    Ok(Psd {
        power,
        resolution: fs / seg_len as f64,
    })
}

/// Spectral peaks sorted by frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakList {
    pub frequencies: Vec<f64>,
    pub powers: Vec<f64>,
    /// Grid spacing of the periodogram the peaks came from.
    pub resolution: f64,
}

impl PeakList {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakParams {
    pub max_peaks: usize,
    /// Minimum height above the median PSD, in dB.
    pub threshold_db: f64,
    /// Minimum distance between accepted peaks, in grid bins.
    pub min_separation_bins: usize,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self {
            max_peaks: 20,
            threshold_db: 10.0,
            min_separation_bins: 2,
        }
    }
}

/// The `max_peaks` strongest local maxima with default threshold and
/// separation.
pub fn pick_peaks(psd: &Psd, max_peaks: usize) -> PeakList {
    pick_peaks_with(
        psd,
        &PeakParams {
            max_peaks,
            ..PeakParams::default()
        },
    )
}

pub fn pick_peaks_with(psd: &Psd, params: &PeakParams) -> PeakList {
    let p = &psd.power;
    let empty = PeakList {
        frequencies: vec![],
        powers: vec![],
        resolution: psd.resolution,
    };
    if p.len() < 3 || params.max_peaks == 0 {
        return empty;
    }
    let mut sorted = p.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let floor = median * 10f64.powf(params.threshold_db / 10.0);

    let mut maxima: Vec<usize> = (1..p.len() - 1)
        .filter(|&k| p[k] > 0.0 && p[k] > floor && p[k] >= p[k - 1] && p[k] > p[k + 1])
        .collect();
    maxima.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));

    let mut chosen: Vec<usize> = Vec::new();
    for k in maxima {
        if chosen.len() == params.max_peaks {
            break;
        }
        if chosen
            .iter()
            .all(|&c| c.abs_diff(k) >= params.min_separation_bins)
        {
            chosen.push(k);
        }
    }
    chosen.sort_unstable();

    let frequencies = chosen
        .iter()
        .map(|&k| (k as f64 + parabolic_offset(p[k - 1], p[k], p[k + 1])) * psd.resolution)
        .collect();
    let powers = chosen.iter().map(|&k| p[k]).collect();
    PeakList {
        frequencies,
        powers,
        resolution: psd.resolution,
    }
}

/// Vertex offset of the parabola through three log-power samples.
fn parabolic_offset(left: f64, centre: f64, right: f64) -> f64 {
    let tiny = f64::MIN_POSITIVE;
    let (a, b, c) = (
        left.max(tiny).ln(),
        centre.max(tiny).ln(),
        right.max(tiny).ln(),
    );
    let denom = a - 2.0 * b + c;
    if denom.abs() < 1e-300 {
        return 0.0;
    }
    (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
}

/// A candidate shift with the number of peak pairs supporting it.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub frequency: f64,
    pub support: usize,
    pub weight: f64,
}

/// Positive pairwise differences of the peak frequencies, merged within one
/// grid bin and sorted ascending.
pub fn candidate_modulations(peaks: &PeakList) -> Vec<f64> {
    candidates_with_support(peaks)
        .into_iter()
        .map(|c| c.frequency)
        .collect()
}

/// Like [`candidate_modulations`] but keeps how many peak pairs produced
/// each candidate and their combined weight (`Σ sqrt(P_i·P_j)`).
pub fn candidates_with_support(peaks: &PeakList) -> Vec<Candidate> {
    let n = peaks.len();
    let mut diffs: Vec<(f64, f64)> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d = peaks.frequencies[j] - peaks.frequencies[i];
            if d > 0.0 {
                diffs.push((d, (peaks.powers[i] * peaks.powers[j]).sqrt()));
            }
        }
    }
    diffs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut out: Vec<Candidate> = Vec::new();
    let mut cluster: Vec<(f64, f64)> = Vec::new();
    let flush = |cluster: &mut Vec<(f64, f64)>, out: &mut Vec<Candidate>| {
        if cluster.is_empty() {
            return;
        }
        let weight: f64 = cluster.iter().map(|c| c.1).sum();
        let frequency = if weight > 0.0 {
            cluster.iter().map(|c| c.0 * c.1).sum::<f64>() / weight
        } else {
            cluster.iter().map(|c| c.0).sum::<f64>() / cluster.len() as f64
        };
        out.push(Candidate {
            frequency,
            support: cluster.len(),
            weight,
        });
        cluster.clear();
    };
    for d in diffs {
        if let Some(first) = cluster.first() {
            if d.0 - first.0 > peaks.resolution {
                flush(&mut cluster, &mut out);
            }
        }
        cluster.push(d);
    }
    flush(&mut cluster, &mut out);
    out
}

/// Precomputed STFT of a recording for repeated coherence queries.
pub struct CoherenceAnalyzer<'a> {
    signal: &'a AudioBuffer<f64>,
    cfg: Arc<StftConfig>,
    reference: ComplexSpectrogram,
    top_bins: Vec<usize>,
    ref_energy: Vec<f64>,
}

/// Fraction of STFT bins, by energy, that enter the coherence average.
pub const COHERENCE_BIN_FRACTION: f64 = 0.1;

impl<'a> CoherenceAnalyzer<'a> {
    pub fn new(signal: &'a AudioBuffer<f64>, cfg: &StftConfig) -> Result<Self> {
        let cfg = Arc::new(cfg.clone());
        let reference = stft_shared(signal, &cfg)?;
        let energy: Vec<f64> = (0..reference.bins())
            .map(|k| reference.bin(k).iter().map(|z| z.norm_sqr()).sum())
            .collect();
        if !energy.iter().any(|&e| e > 0.0) {
            return Err(Error::ZeroEnergy);
        }
        let count = ((reference.bins() as f64 * COHERENCE_BIN_FRACTION).ceil() as usize).max(1);
        // Rank by the energy of each bin and its mirror. For real input the
        // two are equal up to rounding, and ranking them individually would
        // let rounding decide which one makes the cut.
        let bins = energy.len();
        let rank: Vec<f64> = (0..bins)
            .map(|k| energy[k] + energy[(bins - k) % bins])
            .collect();
        let mut order: Vec<usize> = (0..bins).collect();
        order.sort_by(|&a, &b| rank[b].total_cmp(&rank[a]).then(a.cmp(&b)));
        let mut top_bins: Vec<usize> = order
            .into_iter()
            .take(count)
            .filter(|&k| energy[k] > 0.0)
            .collect();
        top_bins.sort_unstable();
        let ref_energy = top_bins.iter().map(|&k| energy[k]).collect();
        Ok(Self {
            signal,
            cfg,
            reference,
            top_bins,
            ref_energy,
        })
    }

    pub fn top_bins(&self) -> &[usize] {
        &self.top_bins
    }

    fn shifted(&self, alpha: f64) -> Result<ComplexSpectrogram> {
        stft_shared(&modulate(self.signal, alpha)?, &self.cfg)
    }

    /// Mean over the top-energy bins of
    /// `|Σ_ℓ x(k,ℓ)·conj(x_α(k,ℓ))| / sqrt(Σ_ℓ|x|²·Σ_ℓ|x_α|²)`.
    pub fn coherence(&self, alpha: f64) -> Result<f64> {
        if alpha == 0.0 {
            return Ok(self.coherence_against(&self.reference));
        }
        let shifted = self.shifted(alpha)?;
        Ok(self.coherence_against(&shifted))
    }

    fn coherence_against(&self, shifted: &ComplexSpectrogram) -> f64 {
        let total: f64 = self
            .top_bins
            .iter()
            .zip(&self.ref_energy)
            .map(|(&k, &e)| {
                let (cross, energy) = self
                    .reference
                    .bin(k)
                    .iter()
                    .zip(shifted.bin(k))
                    .fold((Complex64::new(0.0, 0.0), 0.0), |(c, s), (x, y)| {
                        (c + x * y.conj(), s + y.norm_sqr())
                    });
                if energy > 0.0 {
                    cross.norm() / (e * energy).sqrt()
                } else {
                    0.0
                }
            })
            .sum();
        (total / self.top_bins.len() as f64).clamp(0.0, 1.0)
    }

    /// Searches `alpha ± span` for the shift of highest coherence.
    ///
    /// A small extra shift `δ` mostly rotates frame `ℓ` by
    /// `exp(j·2π·δ·ℓ·hop/fs)`, so the coherence numerator as a function of
    /// `δ` is the DTFT over frames of the per-bin cross products. It is
    /// evaluated with one zero-padded FFT per bin; the winning shift is then
    /// re-scored exactly.
    pub fn refine(&self, alpha: f64, span: f64) -> Result<(f64, f64)> {
        let shifted = self.shifted(alpha)?;
        let base = self.coherence_against(&shifted);
        let frames = shifted.frames();
        let len = (4 * frames).next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(len);
        let mut profile = vec![0.0; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for (&k, &e) in self.top_bins.iter().zip(&self.ref_energy) {
            let x = self.reference.bin(k);
            let y = shifted.bin(k);
            let energy: f64 = y.iter().map(|z| z.norm_sqr()).sum();
            if energy <= 0.0 {
                continue;
            }
            let norm = 1.0 / (e * energy).sqrt();
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for (b, (x, y)) in buf.iter_mut().zip(x.iter().zip(y)) {
                *b = x * y.conj();
            }
            fft.process(&mut buf);
            for (p, b) in profile.iter_mut().zip(&buf) {
                *p += b.norm() * norm;
            }
        }

        // FFT bin m corresponds to δ = m·fs/(hop·len), wrapped
        let step = self.cfg.frame_rate() / len as f64;
        let reach = ((span / step).floor() as usize).min(len / 2 - 1);
        let index = |offset: isize| -> usize { offset.rem_euclid(len as isize) as usize };
        let mut best = 0isize;
        for off in -(reach as isize)..=reach as isize {
            if profile[index(off)] > profile[index(best)] {
                best = off;
            }
        }
        let frac = parabola_vertex(
            profile[index(best - 1)],
            profile[index(best)],
            profile[index(best + 1)],
        );
        let delta = (best as f64 + frac) * step;
        let refined = alpha + delta;
        let nyquist = self.signal.sample_rate as f64 / 2.0;
        if delta == 0.0 || refined.abs() >= nyquist {
            return Ok((alpha, base));
        }
        let score = self.coherence(refined)?;
        Ok(if score >= base {
            (refined, score)
        } else {
            (alpha, base)
        })
    }
}

fn parabola_vertex(a: f64, b: f64, c: f64) -> f64 {
    let denom = a - 2.0 * b + c;
    if denom.abs() < 1e-300 {
        return 0.0;
    }
    (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
}

/// Spectral coherence between the recording and its copy shifted by
/// `alpha`, averaged over the top-energy tenth of the STFT bins.
pub fn spectral_coherence(signal: &AudioBuffer<f64>, alpha: f64, cfg: &StftConfig) -> Result<f64> {
    let nyquist = signal.sample_rate as f64 / 2.0;
    if !alpha.is_finite() || alpha.abs() >= nyquist {
        return Err(Error::ShiftOutOfRange { alpha, nyquist });
    }
    CoherenceAnalyzer::new(signal, cfg)?.coherence(alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceReport {
    pub candidate: f64,
    pub coherence: f64,
    pub accepted: bool,
}

/// Tunables of [`estimate_modulation_set`].
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorParams {
    pub seg_len: usize,
    pub overlap: f64,
    pub peaks: PeakParams,
    pub coherence_threshold: f64,
    /// Cap on the set size, zero shift included.
    pub max_channels: usize,
    /// Number of candidates, ranked by peak-pair support, that are scored.
    pub max_candidates: usize,
    /// Search each candidate within one periodogram bin for the
    /// coherence maximum.
    pub refine: bool,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            seg_len: 4096,
            overlap: 0.5,
            peaks: PeakParams::default(),
            coherence_threshold: 0.3,
            max_channels: 5,
            max_candidates: 24,
            refine: true,
        }
    }
}

impl EstimatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.coherence_threshold) {
            return Err(Error::InvalidParameter(format!(
                "coherence threshold must lie in [0, 1], got {}",
                self.coherence_threshold
            )));
        }
        if self.max_channels == 0 || self.peaks.max_peaks == 0 {
            return Err(Error::InvalidParameter(
                "max_channels and max_peaks must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.overlap) || self.seg_len < 2 {
            return Err(Error::InvalidParameter("invalid Welch segmentation".into()));
        }
        Ok(())
    }
}

/// Result of [`estimate_modulation_set`] with the intermediate evidence.
#[derive(Debug, Clone)]
pub struct ModulationEstimate {
    pub modset: ModulationSet,
    pub peaks: PeakList,
    pub reports: Vec<CoherenceReport>,
}

/// Estimates the modulation set of a recording. Never fails on valid
/// parameters: recordings without usable structure yield `{0}`.
pub fn estimate_modulation_set(
    signal: &AudioBuffer<f64>,
    params: &EstimatorParams,
    cfg: &StftConfig,
) -> Result<ModulationEstimate> {
    params.validate()?;
    let trivial = |peaks: PeakList, reports| ModulationEstimate {
        modset: ModulationSet::trivial(),
        peaks,
        reports,
    };
    let no_peaks = PeakList {
        frequencies: vec![],
        powers: vec![],
        resolution: signal.sample_rate as f64 / params.seg_len as f64,
    };
    if params.max_channels == 1 {
        return Ok(trivial(no_peaks, vec![]));
    }
    let psd = match welch_periodogram(signal, params.seg_len, params.overlap) {
        Ok(psd) => psd,
        Err(Error::TooShort { len, needed }) => {
            log::warn!("recording too short for modulation estimation ({len} < {needed} samples)");
            return Ok(trivial(no_peaks, vec![]));
        }
        Err(e) => return Err(e),
    };
    let peaks = pick_peaks_with(&psd, &params.peaks);
    let mut candidates = candidates_with_support(&peaks);
    let nyquist = signal.sample_rate as f64 / 2.0;
    candidates.retain(|c| c.frequency < nyquist);
    if candidates.is_empty() {
        return Ok(trivial(peaks, vec![]));
    }
    candidates.sort_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then(b.weight.total_cmp(&a.weight))
            .then(a.frequency.total_cmp(&b.frequency))
    });
    candidates.truncate(params.max_candidates);
    candidates.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));

    let analyzer = match CoherenceAnalyzer::new(signal, cfg) {
        Ok(a) => a,
        Err(Error::ZeroEnergy) => return Ok(trivial(peaks, vec![])),
        Err(e) => return Err(e),
    };
    let mut reports = candidates
        .iter()
        .map(|c| {
            let (alpha, coherence) = if params.refine {
                analyzer.refine(c.frequency, psd.resolution)?
            } else {
                (c.frequency, analyzer.coherence(c.frequency)?)
            };
            Ok(CoherenceReport {
                candidate: alpha,
                coherence,
                accepted: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by(|&a, &b| {
        reports[b]
            .coherence
            .total_cmp(&reports[a].coherence)
            .then(reports[a].candidate.total_cmp(&reports[b].candidate))
    });
    let mut chosen: Vec<f64> = Vec::new();
    for i in order {
        if chosen.len() + 1 >= params.max_channels {
            break;
        }
        let r = &reports[i];
        if r.coherence < params.coherence_threshold {
            break;
        }
        // refined candidates may converge onto the same shift
        if chosen
            .iter()
            .any(|&a| (a - r.candidate).abs() <= psd.resolution)
        {
            continue;
        }
        chosen.push(r.candidate);
        reports[i].accepted = true;
    }
    chosen.sort_by(f64::total_cmp);
    let mut shifts = vec![0.0];
    shifts.extend(chosen);
    Ok(ModulationEstimate {
        modset: ModulationSet::new(shifts, signal.sample_rate)?,
        peaks,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn peaks(freqs: &[f64]) -> PeakList {
        PeakList {
            frequencies: freqs.to_vec(),
            powers: vec![1.0; freqs.len()],
            resolution: 16_000.0 / 4096.0,
        }
    }

    #[test]
    fn two_peaks_one_candidate() {
        assert_eq!(candidate_modulations(&peaks(&[100.0, 250.0])), vec![150.0]);
    }

    #[test]
    fn harmonic_peaks_merge() {
        assert_eq!(
            candidate_modulations(&peaks(&[120.0, 240.0, 360.0])),
            vec![120.0, 240.0]
        );
        let c = candidates_with_support(&peaks(&[120.0, 240.0, 360.0]));
        assert_eq!(c[0].support, 2);
        assert_eq!(c[1].support, 1);
    }

    #[test]
    fn single_peak_no_candidates() {
        assert!(candidate_modulations(&peaks(&[100.0])).is_empty());
        assert!(candidate_modulations(&peaks(&[])).is_empty());
    }

    #[test]
    fn flat_spectrum_has_no_peaks() {
        let psd = Psd {
            power: vec![1.0; 2049],
            resolution: 16_000.0 / 4096.0,
        };
        assert!(pick_peaks(&psd, 20).is_empty());
    }

    #[test]
    fn zero_signal_zero_psd() {
        let psd = welch_periodogram(&AudioBuffer::zeros(10_000, 16_000), 4096, 0.5).unwrap();
        assert!(psd.power.iter().all(|&p| p == 0.0));
        assert_eq!(psd.len(), 2049);
    }

    #[test]
    fn welch_too_short() {
        let r = welch_periodogram(&AudioBuffer::zeros(100, 16_000), 4096, 0.5);
        assert!(matches!(r, Err(Error::TooShort { .. })));
    }

    #[test]
    fn bin_centred_tone_power() {
        // bin-centred tone: |X| = A/2 · Σw, so PSD = A²·(Σw)² / (2·fs·Σw²)
        let fs = 16_000.0;
        let seg = 4096;
        let amp = 0.7;
        let f = 100.0 * fs / seg as f64;
        let x = AudioBuffer::new(
            (0..seg * 8)
                .map(|n| amp * (2.0 * PI * f * n as f64 / fs).cos())
                .collect(),
            16_000,
        );
        let psd = welch_periodogram(&x, seg, 0.5).unwrap();
        let w = hann_periodic(seg);
        let sum: f64 = w.iter().sum();
        let sum_sq: f64 = w.iter().map(|v| v * v).sum();
        let expected = amp * amp * sum * sum / (2.0 * fs * sum_sq);
        assert!((psd.power[100] - expected).abs() / expected < 0.1);
    }

    #[test]
    fn zero_energy_coherence_fails() {
        let cfg = StftConfig::speech_16k();
        let r = spectral_coherence(&AudioBuffer::zeros(8000, 16_000), 100.0, &cfg);
        assert!(matches!(r, Err(Error::ZeroEnergy)));
    }

    #[test]
    fn cap_of_one_is_trivial() {
        let cfg = StftConfig::speech_16k();
        let x = AudioBuffer::new(
            (0..40_000).map(|n| (0.05 * n as f64).sin()).collect(),
            16_000,
        );
        let params = EstimatorParams {
            max_channels: 1,
            ..EstimatorParams::default()
        };
        let est = estimate_modulation_set(&x, &params, &cfg).unwrap();
        assert!(est.modset.is_trivial());
    }
}
