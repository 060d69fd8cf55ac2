//! Desk-scale toolkit for speaker-adapted end-to-end speech recognition
//! under controlled noise: deterministic toy corpus, SNR-exact augmentation,
//! log-mel and frozen-extractor features, per-speaker prototype embeddings
//! concatenated to acoustic features, two trainable architectures with a
//! from-scratch autodiff core, joint CTC/attention decoding with shallow LM
//! fusion, and WER/relative-improvement grid reports.

pub mod corpus;
pub mod decode;
pub mod error;
pub mod features;
pub mod neural;
pub mod signal;
pub mod speaker;

pub use error::{Error, Result};

/// Tool version embedded in every output artifact.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
