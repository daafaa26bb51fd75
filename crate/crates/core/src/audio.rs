use num_complex::Complex64;

/// A sampled waveform. `T` is `f64` for real recordings and `Complex64` for
/// modulated copies.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer<T = f64> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

pub type ComplexBuffer = AudioBuffer<Complex64>;

impl<T> AudioBuffer<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

impl AudioBuffer<f64> {
    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate)
    }

    /// Mean power (mean of squared samples).
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn to_complex(&self) -> ComplexBuffer {
        AudioBuffer::new(
            self.samples
                .iter()
                .map(|&s| Complex64::new(s, 0.0))
                .collect(),
            self.sample_rate,
        )
    }

    pub fn scaled(&self, gain: f64) -> Self {
        AudioBuffer::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate,
        )
    }
}

impl AudioBuffer<Complex64> {
    /// Drops the imaginary part.
    pub fn real_part(&self) -> AudioBuffer<f64> {
        AudioBuffer::new(
            self.samples.iter().map(|s| s.re).collect(),
            self.sample_rate,
        )
    }
}

pub(crate) fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|s| s * s).sum::<f64>() / x.len() as f64
}
