//! Speech enhancement against harmonic, cyclostationary noise.
//!
//! The centrepiece is a cyclic minimum-power distortionless-response
//! (cMPDR) filter. A recording is frequency-shifted by every cyclic
//! frequency of a small modulation set; the shifted copies form a
//! multichannel spectrogram in which harmonic noise at one frequency is
//! correlated with its neighbours. A per-bin MPDR filter with unit gain on
//! the unshifted channel then cancels that predictable part.
//!
//! ```
//! use cyclobeam::{AudioBuffer, cmpdr, modulation, stft};
//!
//! let fs = 16_000;
//! let x = AudioBuffer::new(
//!     (0..fs).map(|n| (n as f64 * 0.07).sin()).collect(),
//!     fs as u32,
//! );
//! let cfg = stft::StftConfig::speech_16k();
//! let set = modulation::ModulationSet::new(vec![0.0, 100.0], 16_000)?;
//! let aug = modulation::build_augmented(&x, &set, &cfg)?;
//! let y = cmpdr::process(&aug, &cmpdr::CmpdrParams::default())?;
//! let out = stft::istft_real(&y)?;
//! assert_eq!(out.len(), x.len());
//! # Ok::<(), cyclobeam::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod audio;
pub mod baselines;
pub mod cmpdr;
pub mod config;
pub mod cyclic;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod modulation;
pub mod noise;
pub mod pipeline;
pub mod speech;
pub mod stft;
pub mod wav;

pub use audio::{AudioBuffer, ComplexBuffer};
pub use error::{Error, Result, StageExt};

// The guide's code listings run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/stft.md")]
    mod stft {}
    #[doc = include_str!("../../../book/src/cmpdr.md")]
    mod cmpdr {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
