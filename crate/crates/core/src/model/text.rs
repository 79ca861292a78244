use rand::Rng;

use super::{Embedding, ModelDims};
use crate::error::{Error, Result};
use crate::linalg::{self, normalize_backward};
use crate::mlp::{Mlp, MlpCache};

/// Positional embeddings, a per-token `affine → tanh → affine` block, mean
/// pooling over tokens, and a final affine projection.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoderParams {
    pub token_dim: usize,
    /// `max_len × token_dim`.
    pub positional: Vec<f64>,
    pub block: Mlp,
    pub proj: Mlp,
}

/// Gradients of a scalar with respect to every text-encoder parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoderGrads {
    pub positional: Vec<f64>,
    pub block: Vec<f64>,
    pub proj: Vec<f64>,
}

impl TextEncoderParams {
    pub fn init(dims: &ModelDims, rng: &mut impl Rng) -> Self {
        let positional = (0..dims.max_len * dims.token).map(|_| rng.gen_range(-0.5..0.5)).collect();
        Self {
            token_dim: dims.token,
            positional,
            block: Mlp::init(&[dims.token, dims.hidden, dims.token], rng, false),
            proj: Mlp::init(&[dims.token, dims.embed], rng, false),
        }
    }

    pub fn max_len(&self) -> usize {
        self.positional.len() / self.token_dim
    }

    pub fn zero_grads(&self) -> TextEncoderGrads {
        TextEncoderGrads {
            positional: vec![0.0; self.positional.len()],
            block: vec![0.0; self.block.len()],
            proj: vec![0.0; self.proj.len()],
        }
    }
}

/// Forward activations of one text encoding, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct TextCache {
    pub embedding: Embedding,
    len: usize,
    blocks: Vec<MlpCache>,
    proj: MlpCache,
    y_norm: f64,
}

impl TextCache {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Encodes a flat `L × token_dim` sequence of continuous token vectors.
pub fn encode_text(tokens: &[f64], p: &TextEncoderParams) -> Result<TextCache> {
    let dim = p.token_dim;
    if tokens.len() % dim != 0 {
        return Err(Error::Shape(format!("{} token values is not a multiple of {dim}", tokens.len())));
    }
    let len = tokens.len() / dim;
    if len == 0 || len > p.max_len() {
        return Err(Error::Length { len, max: p.max_len() });
    }
    let mut pooled = vec![0.0; dim];
    let mut blocks = Vec::with_capacity(len);
    for j in 0..len {
        let z: Vec<f64> = tokens[j * dim..(j + 1) * dim]
            .iter()
            .zip(&p.positional[j * dim..(j + 1) * dim])
            .map(|(t, q)| t + q)
            .collect();
        let c = p.block.forward(&z);
        linalg::add_assign(&mut pooled, c.output());
        blocks.push(c);
    }
    pooled.iter_mut().for_each(|v| *v /= len as f64);
    let proj = p.proj.forward(&pooled);
    let (embedding, y_norm) = Embedding::normalize(proj.output().to_vec())?;
    Ok(TextCache { embedding, len, blocks, proj, y_norm })
}

/// Backward pass of [`encode_text`] for the scalar `⟨upstream, e⟩`.
///
/// Returns the gradient with respect to every input token (same flat layout
/// as the input) and, when `grads` is given, accumulates parameter gradients.
pub fn text_backward(
    cache: &TextCache,
    p: &TextEncoderParams,
    upstream: &[f64],
    mut grads: Option<&mut TextEncoderGrads>,
) -> Vec<f64> {
    let dim = p.token_dim;
    let dy = normalize_backward(cache.embedding.as_slice(), cache.y_norm, upstream);
    let mut d_pooled = p.proj.backward(&cache.proj, &dy, grads.as_deref_mut().map(|g| &mut g.proj[..]));
    d_pooled.iter_mut().for_each(|v| *v /= cache.len as f64);
    let mut d_tokens = Vec::with_capacity(cache.len * dim);
    for (j, block) in cache.blocks.iter().enumerate() {
        let dz = p.block.backward(block, &d_pooled, grads.as_deref_mut().map(|g| &mut g.block[..]));
        if let Some(g) = grads.as_deref_mut() {
            linalg::add_assign(&mut g.positional[j * dim..(j + 1) * dim], &dz);
        }
        d_tokens.extend(dz);
    }
    d_tokens
}

/// Exact gradient of `⟨upstream, encode_text(tokens)⟩` with respect to each
/// input token vector, through the L2 normalization.
pub fn encode_text_vjp(tokens: &[f64], p: &TextEncoderParams, upstream: &[f64]) -> Result<Vec<f64>> {
    let cache = encode_text(tokens, p)?;
    if upstream.len() != cache.embedding.dim() {
        return Err(Error::Shape(format!("upstream of {} for embedding of {}", upstream.len(), cache.embedding.dim())));
    }
    Ok(text_backward(&cache, p, upstream, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, norm};

    fn small() -> (ModelDims, TextEncoderParams) {
        let dims = ModelDims { embed: 6, token: 5, hidden: 7, vocab: 4, max_len: 6, n_mels: 4 };
        let mut rng = crate::seed::rng(9, "test", 0);
        (dims, TextEncoderParams::init(&dims, &mut rng))
    }

    fn random(n: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn vjp_matches_central_differences() {
        let mut rng = crate::seed::rng(10, "test", 0);
        for case in 0..20 {
            let dims = ModelDims::default();
            let p = TextEncoderParams::init(&dims, &mut rng);
            let len = 1 + case % dims.max_len;
            let tokens = random(len * dims.token, &mut rng);
            let up = random(dims.embed, &mut rng);
            let g = encode_text_vjp(&tokens, &p, &up).unwrap();
            assert_eq!(g.len(), tokens.len());
            let f = |t: &[f64]| dot(encode_text(t, &p).unwrap().embedding.as_slice(), &up);
            let h = 1e-4;
            for i in 0..tokens.len() {
                let (mut a, mut b) = (tokens.clone(), tokens.clone());
                a[i] += h;
                b[i] -= h;
                let fd = (f(&a) - f(&b)) / (2.0 * h);
                let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
                assert!(rel < 1e-4, "case {case} coord {i}: fd {fd} analytic {}", g[i]);
            }
        }
    }

    #[test]
    fn parameter_gradients_match_central_differences() {
        let (_, p) = small();
        let mut rng = crate::seed::rng(11, "test", 0);
        let tokens = random(3 * 5, &mut rng);
        let up = random(6, &mut rng);
        let cache = encode_text(&tokens, &p).unwrap();
        let mut g = p.zero_grads();
        text_backward(&cache, &p, &up, Some(&mut g));
        let f = |q: &TextEncoderParams| dot(encode_text(&tokens, q).unwrap().embedding.as_slice(), &up);
        let h = 1e-6;
        let check = |fd: f64, an: f64, what: &str| {
            assert!((fd - an).abs() < 1e-7 + 1e-5 * an.abs(), "{what}: fd {fd} analytic {an}");
        };
        for i in 0..p.positional.len() {
            let (mut a, mut b) = (p.clone(), p.clone());
            a.positional[i] += h;
            b.positional[i] -= h;
            check((f(&a) - f(&b)) / (2.0 * h), g.positional[i], "positional");
        }
        for i in 0..p.block.len() {
            let (mut a, mut b) = (p.clone(), p.clone());
            a.block.params_mut()[i] += h;
            b.block.params_mut()[i] -= h;
            check((f(&a) - f(&b)) / (2.0 * h), g.block[i], "block");
        }
        for i in 0..p.proj.len() {
            let (mut a, mut b) = (p.clone(), p.clone());
            a.proj.params_mut()[i] += h;
            b.proj.params_mut()[i] -= h;
            check((f(&a) - f(&b)) / (2.0 * h), g.proj[i], "proj");
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let (_, p) = small();
        let mut rng = crate::seed::rng(12, "test", 0);
        let tokens = random(10, &mut rng);
        assert!(encode_text_vjp(&tokens, &p, &[0.0; 6]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_depends_on_position() {
        let (_, p) = small();
        let mut rng = crate::seed::rng(13, "test", 0);
        let a = random(5, &mut rng);
        let b = random(5, &mut rng);
        let single = encode_text(&a, &p).unwrap().embedding;
        let twice = encode_text(&[a.clone(), a.clone()].concat(), &p).unwrap().embedding;
        assert_ne!(single, twice);
        let ab = encode_text(&[a.clone(), b.clone()].concat(), &p).unwrap().embedding;
        let ba = encode_text(&[b, a].concat(), &p).unwrap().embedding;
        assert_ne!(ab, ba);
        assert!((norm(ab.as_slice()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_long_sequences_are_rejected() {
        let (_, p) = small();
        assert!(matches!(encode_text(&vec![0.1; 7 * 5], &p), Err(Error::Length { len: 7, max: 6 })));
        assert!(matches!(encode_text(&[], &p), Err(Error::Length { len: 0, .. })));
    }
}
