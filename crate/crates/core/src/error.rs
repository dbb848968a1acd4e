use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid filter width {0}: only width 2 is supported")]
    InvalidFilterWidth(usize),
    #[error("channel count must be at least 1")]
    ZeroChannels,
    #[error("layer count must be at least 1")]
    ZeroLayers,
    #[error("block count must be at least 1")]
    ZeroBlocks,
    #[error("at least 2 quantization levels are required, got {0}")]
    TooFewQuantLevels(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("weight file does not start with the expected magic bytes")]
    MagicMismatch,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("weight file ends before all values were read")]
    TruncatedFile,

    #[error("fixed-point format mismatch: {0} vs {1}")]
    FormatMismatch(crate::fixed::FxFormat, crate::fixed::FxFormat),
    #[error("invalid fixed-point format: {0}")]
    InvalidFormat(String),

    #[error("input must not be empty")]
    EmptyInput,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid parallelism: {0}")]
    InvalidParallelism(String),

    #[error("queue length must be at least 1")]
    ZeroLength,
    #[error("expected a vector of {expected} channels, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("bin {bin} is outside 0..{levels}")]
    BinOutOfRange { bin: usize, levels: usize },
    #[error("signal of {len} samples is shorter than the {window}-sample window")]
    SignalTooShort { len: usize, window: usize },
    #[error("invalid spectrogram parameters: {0}")]
    InvalidSpectrogram(String),

    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
}
