use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix must be square and non-empty (got {rows} rows, {len} entries)")]
    NotSquare { rows: usize, len: usize },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("not a permutation of 0..{n}: {mapping:?}")]
    InvalidPermutation { n: usize, mapping: Vec<usize> },

    #[error("N = {n} exceeds the enumeration cap of {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in Sinkhorn iteration {iteration} (beta too large for the cost scale?)")]
    SinkhornDiverged { iteration: usize },

    #[error("loss became non-finite at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("matrix is not doubly stochastic: marginal deviation {deviation} exceeds {tol}")]
    NotDoublyStochastic { deviation: f64, tol: f64 },

    #[error("no permutation supported on positive entries (residual mass {residual}); tolerance too small for the input's imbalance")]
    NoPositiveSupport { residual: f64 },

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("signal length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),

    #[error("signal is empty, silent, or contains non-finite samples")]
    DegenerateSignal,

    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error("malformed WAV: {0}")]
    MalformedWav(String),

    #[error("unsupported WAV channel count {0} (mono only)")]
    UnsupportedChannels(u16),

    #[error("unsupported WAV encoding: format tag {format}, {bits} bits per sample (PCM16 only)")]
    UnsupportedEncoding { format: u16, bits: u16 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::SinkhornDiverged { .. } | Error::TrainingDiverged { .. } | Error::NoPositiveSupport { .. }
        )
    }
}
