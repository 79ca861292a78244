use rand::Rng;

use super::{Embedding, ModelDims};
use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};
use crate::mlp::Mlp;

/// Two affine layers with `tanh` between them, applied to the per-bin mean
/// and standard deviation over time.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioEncoderParams {
    pub net: Mlp,
}

impl AudioEncoderParams {
    pub fn init(dims: &ModelDims, rng: &mut impl Rng) -> Self {
        Self { net: Mlp::init(&[2 * dims.n_mels, dims.hidden, dims.embed], rng, false) }
    }
}

/// Time-pooled statistics: `[mean_0..mean_F, std_0..std_F]`.
pub fn pooled_features(m: &MelSpectrogram) -> Vec<f64> {
    let (frames, bins) = (m.frames(), m.bins());
    let mut mean = vec![0.0; bins];
    let mut sq = vec![0.0; bins];
    for t in 0..frames {
        for (f, v) in m.row(t).iter().enumerate() {
            mean[f] += v;
            sq[f] += v * v;
        }
    }
    let n = frames.max(1) as f64;
    for f in 0..bins {
        mean[f] /= n;
        sq[f] = (sq[f] / n - mean[f] * mean[f]).max(0.0).sqrt();
    }
    mean.extend(sq);
    mean
}

pub fn encode_audio(m: &MelSpectrogram, p: &AudioEncoderParams) -> Result<Embedding> {
    if !m.is_finite() {
        return Err(Error::Numerical("non-finite spectrogram".into()));
    }
    let feats = pooled_features(m);
    if feats.len() != p.net.input_dim() {
        return Err(Error::Shape(format!("{} pooled features, encoder expects {}", feats.len(), p.net.input_dim())));
    }
    Embedding::normalize(p.net.forward(&feats).output().to_vec()).map(|(e, _)| e)
}
