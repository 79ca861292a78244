//! The frozen toy contrastive audio-text model: an audio encoder over pooled
//! log-mel statistics, a positional feed-forward text encoder over continuous
//! token embeddings, and cosine-similarity logits scaled by a temperature.

mod audio;
pub(crate) mod checkpoint;
mod pretrain;
pub(crate) mod text;

use serde::{Deserialize, Serialize};

pub use audio::{encode_audio, pooled_features, AudioEncoderParams};
pub use checkpoint::sha256_hex;
pub use pretrain::{pretrain_toy, zero_shot_accuracy, LabeledClip, PretrainConfig, PretrainData, PretrainReport};
pub use text::{encode_text, encode_text_vjp, text_backward, TextCache, TextEncoderGrads, TextEncoderParams};

use crate::dsp::{normalize, MelConfig, MelSpectrogram, NormStats};
use crate::error::{Error, Result};
use crate::linalg;

/// Unit-norm vector in the shared embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `y`, returning the embedding and `‖y‖`.
    pub fn normalize(y: Vec<f64>) -> Result<(Self, f64)> {
        let n = linalg::norm(&y);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Numerical(format!("cannot normalize vector with norm {n}")));
        }
        Ok((Self(y.into_iter().map(|v| v / n).collect()), n))
    }

    /// Wraps a vector that the caller guarantees is already unit-norm.
    pub fn from_unit(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Shared embedding size.
    pub embed: usize,
    /// Token embedding size.
    pub token: usize,
    /// Hidden width of the audio MLP and the per-token text block.
    pub hidden: usize,
    pub vocab: usize,
    pub max_len: usize,
    pub n_mels: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self { embed: 64, token: 64, hidden: 64, vocab: 32, max_len: 16, n_mels: 64 }
    }
}

/// Learned token vectors, indexed by token id.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingTable {
    pub dim: usize,
    pub table: Vec<f64>,
}

impl TokenEmbeddingTable {
    pub fn vocab(&self) -> usize {
        self.table.len() / self.dim
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.table[id * self.dim..(id + 1) * self.dim]
    }

    /// Concatenated embeddings of `ids`.
    pub fn lookup(&self, ids: &[usize]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            if id >= self.vocab() {
                return Err(Error::Shape(format!("token id {id} outside vocabulary of {}", self.vocab())));
            }
            out.extend_from_slice(self.row(id));
        }
        Ok(out)
    }
}

/// Per-view class text embeddings, either shared by every view (`N`) or
/// conditioned per view (`M × N`).
#[derive(Debug, Clone, Copy)]
pub enum ClassTexts<'a> {
    Shared(&'a [Embedding]),
    PerView(&'a [Vec<Embedding>]),
}

/// `g[i][c] = ⟨v_i, u_c⟩ / τ` (or `⟨v_i, u_{i,c}⟩ / τ` per view).
pub fn logits(views: &[Embedding], texts: ClassTexts<'_>, tau: f64) -> Result<Vec<Vec<f64>>> {
    let row = |v: &Embedding, us: &[Embedding]| -> Result<Vec<f64>> {
        us.iter()
            .map(|u| {
                if u.dim() != v.dim() {
                    return Err(Error::Shape(format!("audio dim {} vs text dim {}", v.dim(), u.dim())));
                }
                Ok(linalg::dot(v.as_slice(), u.as_slice()) / tau)
            })
            .collect()
    };
    match texts {
        ClassTexts::Shared(us) => views.iter().map(|v| row(v, us)).collect(),
        ClassTexts::PerView(per) => {
            if per.len() != views.len() {
                return Err(Error::Shape(format!("{} views but {} text sets", views.len(), per.len())));
            }
            views.iter().zip(per).map(|(v, us)| row(v, us)).collect()
        }
    }
}

/// The complete frozen model plus the feature configuration it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub dims: ModelDims,
    pub tau: f64,
    pub sample_rate: u32,
    pub mel: MelConfig,
    pub norm: NormStats,
    pub tokens: TokenEmbeddingTable,
    pub audio: AudioEncoderParams,
    pub text: TextEncoderParams,
}

impl ToyModel {
    /// Randomly initialized (untrained) model.
    pub fn init(dims: ModelDims, tau: f64, mel: MelConfig, sample_rate: u32, seed: u64) -> Self {
        use rand::Rng;
        let mut rng = crate::seed::rng(seed, "model-init", 0);
        let table = (0..dims.vocab * dims.token).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self {
            dims,
            tau,
            sample_rate,
            mel,
            norm: NormStats::identity(dims.n_mels),
            tokens: TokenEmbeddingTable { dim: dims.token, table },
            audio: AudioEncoderParams::init(&dims, &mut rng),
            text: TextEncoderParams::init(&dims, &mut rng),
        }
    }

    /// Normalizes a raw log-mel spectrogram and embeds it.
    pub fn embed_audio(&self, m: &MelSpectrogram) -> Result<Embedding> {
        encode_audio(&normalize(m, &self.norm)?, &self.audio)
    }

    pub fn embed_text(&self, tokens: &[f64]) -> Result<Embedding> {
        encode_text(tokens, &self.text).map(|c| c.embedding)
    }

    /// Every parameter block in checkpoint order.
    pub(crate) fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("norm_mean", &self.norm.mean[..]),
            ("norm_std", &self.norm.std[..]),
            ("tokens", &self.tokens.table[..]),
            ("positional", &self.text.positional[..]),
            ("audio", self.audio.net.params()),
            ("text_block", self.text.block.params()),
            ("text_proj", self.text.proj.params()),
        ]
    }
}
