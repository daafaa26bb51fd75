//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Instant;

use common::{harmonic_mixture, lstsq_si_sdr, mean, Mixture, FS};
use cyclobeam::cmpdr::{solve_weights, CmpdrParams, SpectralCovariance};
use cyclobeam::config::{MaskKind, ModsetSource, PipelineConfig, PreprocKind};
use cyclobeam::cyclic::{estimate_modulation_set, EstimatorParams};
use cyclobeam::linalg::Matrix;
use cyclobeam::metrics::si_sdr;
use cyclobeam::modulation::{build_augmented, ModulationSet};
use cyclobeam::noise::{
    mix_at_snr, synth_harmonic_cs_noise, white_gaussian_noise, HarmonicNoiseParams, MixSpec,
};
use cyclobeam::pipeline::{enhance, Reference};
use cyclobeam::speech::speech_proxy;
use cyclobeam::stft::{istft_real, stft, StftConfig};
use cyclobeam::AudioBuffer;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const MIX_SECS: f64 = 8.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn run_pipeline(m: &Mixture, cfg: &PipelineConfig) -> AudioBuffer<f64> {
    enhance(
        &m.noisy,
        Reference {
            clean: Some(&m.clean),
            f0: Some(m.f0),
        },
        cfg,
        false,
    )
    .unwrap()
    .output
}

fn gain(m: &Mixture, out: &AudioBuffer<f64>) -> f64 {
    lstsq_si_sdr(&out.samples, &m.clean.samples) - lstsq_si_sdr(&m.noisy.samples, &m.clean.samples)
}

fn oracle_set(f0: f64) -> ModsetSource {
    ModsetSource::Fixed(ModulationSet::new(vec![0.0, f0, 2.0 * f0], FS).unwrap())
}

fn with(preproc: PreprocKind, mask: MaskKind, modset: ModsetSource) -> PipelineConfig {
    PipelineConfig {
        preproc,
        mask,
        modset,
        ..PipelineConfig::default()
    }
}

fn random_pd(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Complex64> {
    let cols = 2 * dim;
    let b: Vec<Complex64> = (0..dim * cols)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let mut s = vec![Complex64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..cols {
                acc += b[i * cols + k] * b[j * cols + k].conj();
            }
            s[i * dim + j] = acc / cols as f64;
        }
        s[i * dim + i] += 0.01;
    }
    s
}

fn a1_solver() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA1);
    let start = Instant::now();
    let (mut worst_rel, mut worst_constraint) = (0.0f64, 0.0f64);
    for i in 0..1000 {
        let dim = 2 + i % 5;
        let s = random_pd(&mut rng, dim);
        let w = solve_weights(
            &SpectralCovariance::new(Matrix::from_row_major(s.clone())),
            0.0,
        )
        .w;

        // Stationarity S w = μ e₁ plus the constraint e₁^H w = 1.
        let n = dim + 1;
        let zero = nalgebra::Complex::new(0.0, 0.0);
        let one = nalgebra::Complex::new(1.0, 0.0);
        let mut kkt = DMatrix::from_element(n, n, zero);
        for r in 0..dim {
            for c in 0..dim {
                let z = s[r * dim + c];
                kkt[(r, c)] = nalgebra::Complex::new(z.re, z.im);
            }
        }
        kkt[(0, dim)] = -one;
        kkt[(dim, 0)] = one;
        let mut rhs = nalgebra::DVector::from_element(n, zero);
        rhs[dim] = one;
        let sol = kkt.lu().solve(&rhs).expect("KKT system is nonsingular");

        let norm: f64 = (0..dim).map(|k| sol[k].norm_sqr()).sum::<f64>().sqrt();
        let diff: f64 = (0..dim)
            .map(|k| (Complex64::new(sol[k].re, sol[k].im) - w[k]).norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst_rel = worst_rel.max(diff / norm);
        worst_constraint = worst_constraint.max((w[0].conj() - 1.0).norm());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst_rel <= 1e-8 && worst_constraint <= 1e-10 && secs < 5.0,
        format!(
            "1000 matrices: max rel err {worst_rel:.2e} (≤ 1e-8), max |w^H e1 - 1| {worst_constraint:.2e} (≤ 1e-10), {secs:.2} s (< 5 s)"
        ),
    )
}

#[allow(clippy::needless_range_loop)]
fn a2_invariants() -> Verdict {
    let m = harmonic_mixture(0xA2, -10.0, 10.0, 0.9);
    let cfg = PipelineConfig::default();
    let run = enhance(&m.noisy, Reference::default(), &cfg, true).unwrap();
    let stats = run.cmpdr_stats.clone().unwrap();
    let diag = run.diagnostics.unwrap();

    // Replay the covariance recursion independently and test every
    // recorded weight vector against it.
    let aug = build_augmented(&m.noisy, &run.modset, &cfg.stft_config().unwrap()).unwrap();
    let params = CmpdrParams::default();
    let dim = aug.num_channels();
    let (bins, frames) = aug.shape();
    let mut checked = 0usize;
    let mut violations = 0usize;
    let mut worst_constraint = 0.0f64;
    for k in 0..bins {
        let rows: Vec<&[Complex64]> = aug.channels().iter().map(|c| c.bin(k)).collect();
        let n0 = params.init_frames.min(frames);
        let delta =
            params.init_scale * rows[0][..n0].iter().map(|z| z.norm_sqr()).sum::<f64>() / n0 as f64;
        let mut s = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            s[i * dim + i] = Complex64::new(delta, 0.0);
        }
        for l in 0..frames {
            for i in 0..dim {
                for j in 0..dim {
                    let outer = rows[i][l] * rows[j][l].conj();
                    s[i * dim + j] = params.beta_x * s[i * dim + j] + (1.0 - params.beta_x) * outer;
                }
            }
            let w = &diag.weights[k][l * dim..(l + 1) * dim];
            let mut power = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    power += (w[i].conj() * s[i * dim + j] * w[j]).re;
                }
            }
            let trace: f64 = (0..dim).map(|i| s[i * dim + i].re).sum();
            if power > s[0].re + 1e-9 * trace {
                violations += 1;
            }
            worst_constraint = worst_constraint.max((w[0].conj() - 1.0).norm());
            checked += 1;
        }
    }
    let pass = violations == 0
        && stats.power_violations == 0
        && stats.hermitian_violations == 0
        && worst_constraint <= 1e-10
        && dim > 1;
    verdict(
        pass,
        format!(
            "10 s run, modset {}: {checked} bin-frames, {violations} replayed violations, {} internal, constraint err {worst_constraint:.1e}",
            run.modset, stats.power_violations
        ),
    )
}

struct HarmonicSuite {
    oracle: Vec<f64>,
    estimated: Vec<f64>,
    wiener: Vec<f64>,
    secs: f64,
}

fn harmonic_suite() -> HarmonicSuite {
    let start = Instant::now();
    let mut suite = HarmonicSuite {
        oracle: vec![],
        estimated: vec![],
        wiener: vec![],
        secs: 0.0,
    };
    for seed in 0..20 {
        let m = harmonic_mixture(0xA300 + seed, -10.0, MIX_SECS, 0.9);
        let cmpdr = |modset| with(PreprocKind::Cmpdr, MaskKind::None, modset);
        suite
            .oracle
            .push(gain(&m, &run_pipeline(&m, &cmpdr(oracle_set(m.f0)))));
        suite
            .estimated
            .push(gain(&m, &run_pipeline(&m, &cmpdr(ModsetSource::Estimate))));
        suite.secs = start.elapsed().as_secs_f64();
        let wiener = with(PreprocKind::Wiener, MaskKind::None, ModsetSource::Estimate);
        suite.wiener.push(gain(&m, &run_pipeline(&m, &wiener)));
    }
    suite
}

fn a3_suppression(s: &HarmonicSuite) -> Verdict {
    let (o, e) = (mean(&s.oracle), mean(&s.estimated));
    verdict(
        o >= 3.0 && e >= 1.5 && s.secs < 120.0,
        format!(
            "20 mixtures at -10 dB: oracle-set gain {o:.2} dB (≥ 3), estimated-set gain {e:.2} dB (≥ 1.5), {:.1} s (< 120 s)",
            s.secs
        ),
    )
}

fn a4_trend() -> Verdict {
    let advantage = |snr: f64| -> f64 {
        let gains: Vec<f64> = (0..20)
            .map(|seed| {
                let m = harmonic_mixture(0xA400 + seed, snr, MIX_SECS, 0.9);
                let id = run_pipeline(
                    &m,
                    &with(
                        PreprocKind::Identity,
                        MaskKind::OracleIrm,
                        ModsetSource::Estimate,
                    ),
                );
                let cm = run_pipeline(
                    &m,
                    &with(
                        PreprocKind::Cmpdr,
                        MaskKind::OracleIrm,
                        ModsetSource::Estimate,
                    ),
                );
                lstsq_si_sdr(&cm.samples, &m.clean.samples)
                    - lstsq_si_sdr(&id.samples, &m.clean.samples)
            })
            .collect();
        mean(&gains)
    };
    let (low, high) = (advantage(-20.0), advantage(0.0));
    verdict(
        low > high,
        format!("cMPDR+IRM over Id+IRM, 20 seeds: {low:.2} dB at -20 dB vs {high:.2} dB at 0 dB"),
    )
}

fn a5_recovery() -> Verdict {
    let params = EstimatorParams::default();
    let cfg = StftConfig::speech_16k();
    let bin = FS as f64 / params.seg_len as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(0xA5);
    let mut hits = 0;
    for _ in 0..50 {
        let f0 = rng.random_range(60.0..150.0);
        let noise = synth_harmonic_cs_noise(
            10.0,
            FS,
            &HarmonicNoiseParams {
                f0,
                correlation: 0.9,
                seed: rng.random(),
                ..HarmonicNoiseParams::default()
            },
        )
        .unwrap();
        let est = estimate_modulation_set(&noise, &params, &cfg).unwrap();
        if est.modset.shifts().iter().any(|a| (a - f0).abs() <= bin) {
            hits += 1;
        }
    }
    let mut trivial = 0;
    for _ in 0..50 {
        let noise = white_gaussian_noise(10 * FS as usize, FS, rng.random());
        if estimate_modulation_set(&noise, &params, &cfg)
            .unwrap()
            .modset
            .is_trivial()
        {
            trivial += 1;
        }
    }
    verdict(
        hits >= 40 && trivial >= 48,
        format!("f0 within one bin on {hits}/50 (≥ 40), {{0}} on white noise {trivial}/50 (≥ 48)"),
    )
}

fn a6_identities() -> Verdict {
    let m = harmonic_mixture(0xA6, -5.0, 10.0, 0.9);
    let reference = Reference::default();
    let id = enhance(
        &m.noisy,
        reference,
        &with(
            PreprocKind::Identity,
            MaskKind::None,
            ModsetSource::Estimate,
        ),
        false,
    )
    .unwrap();
    let zero = ModsetSource::Fixed(ModulationSet::trivial());
    let cm = enhance(
        &m.noisy,
        reference,
        &with(PreprocKind::Cmpdr, MaskKind::None, zero),
        false,
    )
    .unwrap();
    let bit_exact = id.spectrogram.data() == cm.spectrogram.data();

    let cfg = StftConfig::speech_16k();
    let back = istft_real(&stft(&m.noisy, &cfg).unwrap()).unwrap();
    let num: f64 = back
        .samples
        .iter()
        .zip(&m.noisy.samples)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let rel = (num / m.noisy.samples.iter().map(|x| x * x).sum::<f64>()).sqrt();

    // Orthogonal noise at one tenth of the target power.
    let s = common::gaussian(16_000, 61);
    let mut e = common::gaussian(16_000, 62);
    let proj =
        e.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / s.iter().map(|x| x * x).sum::<f64>();
    e.iter_mut().zip(&s).for_each(|(a, b)| *a -= proj * b);
    let scale = (s.iter().map(|x| x * x).sum::<f64>()
        / (10.0 * e.iter().map(|x| x * x).sum::<f64>()))
    .sqrt();
    let est: Vec<f64> = s.iter().zip(&e).map(|(a, b)| a + scale * b).collect();
    let sdr = si_sdr(&AudioBuffer::new(est, FS), &AudioBuffer::new(s, FS)).unwrap();

    verdict(
        bit_exact && rel <= 1e-6 && (sdr - 10.0).abs() <= 1e-6,
        format!("{{0}} vs identity bit-exact: {bit_exact}; STFT round trip rel err {rel:.1e} (≤ 1e-6); orthogonal SI-SDR {sdr:.9} dB"),
    )
}

fn a7_wiener(s: &HarmonicSuite) -> Verdict {
    let cfg = with(PreprocKind::Wiener, MaskKind::None, ModsetSource::Estimate);
    let mut positive = 0;
    for seed in 0..20 {
        let clean = speech_proxy(MIX_SECS, FS, 0xA700 + seed);
        let white = white_gaussian_noise(clean.len(), FS, 0xA7A0 + seed);
        let (noisy, _) = mix_at_snr(&clean, &white, MixSpec { snr_db: 0.0 }).unwrap();
        let out = enhance(&noisy, Reference::default(), &cfg, false)
            .unwrap()
            .output;
        if lstsq_si_sdr(&out.samples, &clean.samples) > lstsq_si_sdr(&noisy.samples, &clean.samples)
        {
            positive += 1;
        }
    }
    let (c, w) = (mean(&s.estimated), mean(&s.wiener));
    verdict(
        positive >= 18 && c > w,
        format!("white noise at 0 dB: Wiener gain > 0 on {positive}/20 (≥ 18); harmonic noise at -10 dB: cMPDR {c:.2} dB vs Wiener {w:.2} dB"),
    )
}

fn a8_determinism() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_cyclobeam");
    let root = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let data = root.path().join(format!("data_{tag}"));
        let out = root.path().join(format!("eval_{tag}"));
        let ok = |args: &[&str]| {
            let status = Command::new(bin)
                .args(args)
                .stdout(Stdio::null())
                .status()
                .unwrap();
            assert!(status.success(), "{args:?} failed");
        };
        ok(&[
            "synth",
            "--speech-proxy",
            "3",
            "--proxy-duration",
            "3",
            "--seed",
            "8",
            "--out",
            data.to_str().unwrap(),
        ]);
        ok(&[
            "eval",
            data.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        (data, out)
    };
    let (da, oa) = run("a");
    let (db, ob) = run("b");
    let same = |a: &Path, b: &Path| std::fs::read(a).unwrap() == std::fs::read(b).unwrap();
    let mut identical = same(&da.join("manifest.csv"), &db.join("manifest.csv"));
    for f in ["metrics.csv", "summary.csv", "curves.csv"] {
        identical &= same(&oa.join(f), &ob.join(f));
    }
    let rows = std::fs::read_to_string(oa.join("metrics.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    verdict(
        identical && rows == 18,
        format!("two synth+eval runs: CSVs byte-identical: {identical}; {rows} metric rows (3 files × 6 configs)"),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: &str, what: &str, f: &mut dyn FnMut() -> Verdict| {
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!v.pass);
        println!(
            "{id} {} {what}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    };
    report("A1", "solver correctness", &mut a1_solver);
    report(
        "A2",
        "distortionless and power invariants",
        &mut a2_invariants,
    );
    let suite = harmonic_suite();
    report("A3", "synthetic suppression", &mut || {
        a3_suppression(&suite)
    });
    report("A4", "low-SNR trend", &mut a4_trend);
    report("A5", "modulation-set recovery", &mut a5_recovery);
    report("A6", "reduction identities", &mut a6_identities);
    report("A7", "Wiener baseline sanity", &mut || a7_wiener(&suite));
    report("A8", "determinism", &mut a8_determinism);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
