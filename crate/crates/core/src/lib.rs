//! Prompt-network test-time adaptation for a toy audio-language model.
//!
//! Waveforms go through a log-mel frontend and SpecAugment-style views; a
//! small contrastive audio/text model scores classes from text prompts, and
//! two prompt networks conditioned on the audio embedding are trained on
//! unlabeled test batches.

pub mod augment;
pub mod dsp;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod linalg;
pub mod mlp;
pub mod model;
pub mod prompt;
pub mod seed;
pub mod tta;

pub use augment::{make_views, AugmentConfig, AugmentOp, ViewSet};
pub use dsp::{compute_mel, MelConfig, MelFrontend, MelSpectrogram, Waveform};
pub use error::{Error, Result};
pub use model::{Embedding, ModelDims, ToyModel};
pub use prompt::{NetConfig, PromptFlags, PromptGradients, PromptState};
pub use tta::{AdaptConfig, AdaptRun, Conditioning, Mode};
