//! Error types for the individual subsystems.

use std::path::PathBuf;

use thiserror::Error;

/// Errors from frequency-response handling and rendering.
#[derive(Debug, Error)]
pub enum FrcError {
    #[error("length mismatch: {freqs} frequencies vs {mags} magnitudes")]
    LengthMismatch { freqs: usize, mags: usize },
    #[error("frequencies must be strictly increasing (violation near index {index})")]
    NotIncreasing { index: usize },
    #[error("frequency {freq_hz} Hz outside supported range [{lo}, {hi}] Hz")]
    FrequencyOutOfRange { freq_hz: f64, lo: f64, hi: f64 },
    #[error("non-finite magnitude at index {index}")]
    NonFiniteMagnitude { index: usize },
    #[error("grid frequency {freq_hz} Hz is at or above the Nyquist frequency {nyquist_hz} Hz")]
    AboveNyquist { freq_hz: f64, nyquist_hz: f64 },
    #[error("resample grid point {freq_hz} Hz is outside the curve span [{lo}, {hi}] Hz")]
    OutsideSpan { freq_hz: f64, lo: f64, hi: f64 },
    #[error("grids are not aligned: {0}")]
    GridMismatch(String),
    #[error("no curves given to render")]
    EmptyCurveList,
    #[error("csv parse error in {path}: {msg}")]
    Csv { path: PathBuf, msg: String },
    #[error("png encoding failed: {0}")]
    Png(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors from FIR design and device simulation.
#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("filter must be nonempty")]
    EmptyFilter,
    #[error("filter has {taps} taps, maximum is {max}")]
    TooManyTaps { taps: usize, max: usize },
    #[error("non-finite filter tap at index {index}")]
    NonFiniteTap { index: usize },
    #[error("magnitude {mag_db} dB at {freq_hz} Hz outside the designable range [{lo}, {hi}] dB")]
    MagnitudeOutOfRange {
        mag_db: f64,
        freq_hz: f64,
        lo: f64,
        hi: f64,
    },
    #[error("sample rate mismatch: audio is {audio_hz} Hz, filter is {filter_hz} Hz")]
    SampleRateMismatch { audio_hz: u32, filter_hz: u32 },
    #[error("need at least {min} devices, asked for {n}")]
    TooFewDevices { n: usize, min: usize },
    #[error(transparent)]
    Frc(#[from] FrcError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors from audio file handling.
#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported wav format in {path}: {msg}")]
    UnsupportedFormat { path: PathBuf, msg: String },
    #[error("failed to read {path}: {msg}")]
    Read { path: PathBuf, msg: String },
    #[error("failed to write {path}: {msg}")]
    Write { path: PathBuf, msg: String },
    #[error("non-finite sample at index {index}")]
    NonFiniteSample { index: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors from dataset manifests, splits and iteration.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("insufficient audio for the requested splits:\n{report}")]
    InsufficientAudio { report: String },
    #[error("file {file} is missing the rendition for device {device}")]
    MissingTarget { file: String, device: String },
    #[error("split {0} has no files")]
    EmptySplit(String),
    #[error("unknown device {0}")]
    UnknownDevice(String),
    #[error("manifest validation failed: {0}")]
    Invalid(String),
    #[error("manifest parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors from embedding extraction, pools and the embedding service client.
#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding must have {expected} dimensions, got {got}")]
    WrongDimension { expected: usize, got: usize },
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error("embedding is all zeros")]
    AllZero,
    #[error("curve must be on the {expected}-band grid, got {got} bands")]
    WrongGrid { expected: usize, got: usize },
    #[error("unknown device {0} in pool")]
    UnknownDevice(String),
    #[error("pool on disk is inconsistent: {0}")]
    CorruptPool(String),
    #[error("transport error talking to {endpoint} (attempt {attempts}): {msg}")]
    Transport {
        endpoint: String,
        attempts: u32,
        msg: String,
    },
    #[error("service contract violation from {endpoint}: {msg}")]
    Contract { endpoint: String, msg: String },
    #[error("prompt template invalid: {0}")]
    BadPrompt(String),
    #[error("too few points for perplexity {perplexity}: need at least {need}, got {got}")]
    TooFewPoints {
        perplexity: f64,
        need: usize,
        got: usize,
    },
    #[error(transparent)]
    Frc(#[from] FrcError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors from model construction and the forward pass.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("input too short: {len} samples, need at least {need}")]
    InputTooShort { len: usize, need: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("batch has {batch} items but {embeddings} embeddings")]
    BatchEmbeddingMismatch { batch: usize, embeddings: usize },
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors from the training loop.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("loss became non-finite at iteration {iteration} (device {device}, lr {lr})")]
    NonFiniteLoss {
        iteration: usize,
        device: String,
        lr: f64,
    },
    #[error("config invalid: {0}")]
    BadConfig(String),
    #[error("few-shot target {0} was part of base training; protocol requires a held-out device")]
    TargetNotHeldOut(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors from metric computation and dataset evaluation.
#[derive(Debug, Error)]
pub enum MetricError {
    #[error("length mismatch: target {target} vs prediction {pred}")]
    LengthMismatch { target: usize, pred: usize },
    #[error("target signal is all zeros")]
    ZeroTarget,
    #[error("signal too short for stoi: {seconds:.2} s, need at least {need:.2} s")]
    TooShort { seconds: f64, need: f64 },
    #[error("all frames silent; stoi undefined")]
    AllSilent,
    #[error("missing test embedding for device {0}")]
    MissingEmbedding(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors from the experiment pipeline.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    pub fn stage<E>(stage: &'static str, err: E) -> Self
    where
        E: std::error::Error + Send + Sync + 'static,
    {
        PipelineError::Stage {
            stage,
            source: Box::new(err),
        }
    }
}
