use std::path::PathBuf;

/// Errors produced by the analysis, enhancement and evaluation stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty signal")]
    EmptySignal,

    #[error("sample rate mismatch: signal is {signal} Hz, configuration expects {expected} Hz")]
    SampleRateMismatch { signal: u32, expected: u32 },

    #[error("invalid STFT configuration: {0}")]
    InvalidStftConfig(String),

    #[error("window pair is not constant-overlap-add (relative deviation {deviation:.3e})")]
    NotCola { deviation: f64 },

    #[error("frequency shift {alpha} Hz is outside (-{nyquist}, {nyquist}) Hz")]
    ShiftOutOfRange { alpha: f64, nyquist: f64 },

    #[error("invalid modulation set: {0}")]
    InvalidModulationSet(String),

    #[error("signal too short: {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("signal has zero energy")]
    ZeroEnergy,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported WAV file {path}: {reason}")]
    UnsupportedWav { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Tags an error with the pipeline stage it came from. The innermost
    /// tag wins.
    pub fn in_stage(self, stage: &'static str) -> Self {
        if matches!(self, Error::Stage { .. }) {
            return self;
        }
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Extension for attaching a stage name to a fallible result.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
