//! # earcast
//!
//! Device-conditioned music transfer: transform input music so it sounds as
//! if played back on a target earphone or headphone, using embeddings
//! derived from the device's frequency response curve to condition a hybrid
//! time/frequency network.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! - [`frc`] — frequency response curves, target overlays, line-graph rendering
//! - [`device`] — minimum-phase FIR realization of curves and paired-data synthesis
//! - [`data`] — windowing, splits and manifest bookkeeping
//! - [`embed`] — 4096-d device embeddings, embedding pools, a service client
//! - [`tsne`] — exact t-SNE for embedding maps
//! - [`model`] — the FiLM-conditioned dual-branch waveform/spectrogram network
//! - [`train`] — the optimization loop and few-shot adaptation
//! - [`metrics`] — SNR / RMSE / STOI and per-device reports
//! - [`pipeline`] — resumable end-to-end experiment runs and ablations
//!
//! A narrative guide with runnable examples lives in `book/`; build it with
//! `mdbook build book` or read the chapters as plain Markdown.

pub mod audio;
pub mod data;
pub mod device;
pub mod embed;
pub mod error;
pub mod frc;
pub mod graph;
pub mod plot;
pub mod tsne;
pub mod vlm;
mod util;

pub use error::{
    AudioError, DataError, DeviceError, EmbedError, FrcError, MetricError, ModelError,
    PipelineError, TrainError,
};
