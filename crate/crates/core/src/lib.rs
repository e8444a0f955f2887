//! Two-stage personalized speech enhancement at 48 kHz.
//!
//! A magnitude-masking network ([`model`] stage 1) cleans the noisy spectrum
//! with help from an enrollment clip of the target speaker, and a complex
//! refinement network (stage 2) adds a residual on the compressed complex
//! spectrum. Both run offline over a whole utterance or frame by frame with a
//! 10 ms hop and a fixed one-hop latency ([`model::StreamSession`]).
//!
//! The rest is what training and evaluation need around it:
//!
//! - [`dsp`]: STFT, overlap-add, power-law compression.
//! - [`nn`]: gated (transposed) convolutions, S-TCM, LSTMs, cumulative layer norm, the parameter registry.
//! - [`losses`]: SI-SNR and multi-resolution compressed spectral losses.
//! - [`datagen`]: image-method room responses and seeded mixture synthesis.
//! - [`schedule`]: freeze/retrain phases and the plateau learning-rate rule.
//! - [`io`]: WAV, weight files and run configs.
//! - [`bench`]: real-time-factor measurement.
//!
//! ```no_run
//! use teapse::dsp::AudioBuffer;
//! use teapse::model::{build_model, ModelConfig, SpeakerEmbedding};
//!
//! let model = build_model(&ModelConfig::toy(), 0)?;
//! let noisy = AudioBuffer::zeros(48_000, 48_000);
//! let enroll = AudioBuffer::zeros(48_000, 48_000);
//! let e = SpeakerEmbedding::zeros(model.config().embedding_dim);
//! let out = model.enhance_offline(&noisy, &enroll, &e)?;
//! assert_eq!(out.len(), noisy.len());
//! # Ok::<(), teapse::Error>(())
//! ```

pub mod bench;
pub mod cli;
pub mod datagen;
pub mod dsp;
pub mod error;
pub mod io;
pub mod losses;
pub(crate) mod linalg;
pub mod model;
pub mod nn;
pub mod schedule;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
