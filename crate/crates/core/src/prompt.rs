//! The two conditional prompt networks and prompt composition.
//!
//! The context network (c-net) maps an audio embedding to one offset vector
//! that is added to every token of the original class prompt. The domain
//! network (d-net) maps the same embedding to `L_d` tokens that are prepended
//! to the prompt. Both are the only trainable parameters during adaptation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mlp::{Mlp, MlpCache};
use crate::model::Embedding;
use crate::seed;

/// Shape of both prompt networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Number of affine layers (1–4).
    pub depth: usize,
    /// Hidden width as a multiple of the embedding size.
    pub width_mult: usize,
    /// Number of prepended domain tokens.
    pub domain_tokens: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { depth: 3, width_mult: 1, domain_tokens: 4 }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.depth) {
            return Err(Error::Config(format!("net depth {} outside 1..=4", self.depth)));
        }
        if self.width_mult == 0 {
            return Err(Error::Config("width multiplier must be positive".into()));
        }
        Ok(())
    }

    fn layer_dims(&self, input: usize, output: usize) -> Vec<usize> {
        let hidden = input * self.width_mult;
        let mut dims = vec![input];
        dims.extend(std::iter::repeat(hidden).take(self.depth - 1));
        dims.push(output);
        dims
    }
}

/// Context network θ1: `d → … → d_text`.
#[derive(Debug, Clone, PartialEq)]
pub struct CNetParams {
    pub net: Mlp,
}

/// Domain network θ2: `d → … → L_d·d_text`, read as `L_d` tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct DNetParams {
    pub net: Mlp,
    pub tokens: usize,
}

/// Which networks take part in prompt composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptFlags {
    pub use_cnet: bool,
    pub use_dnet: bool,
}

impl Default for PromptFlags {
    fn default() -> Self {
        Self { use_cnet: true, use_dnet: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptState {
    /// Frozen class prompts, each a flat `L_c × d_text` sequence.
    p_origin: Vec<Vec<f64>>,
    token_dim: usize,
    pub cnet: CNetParams,
    pub dnet: DNetParams,
}

/// Gradients with the same layout as θ1 and θ2.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptGradients {
    pub cnet: Vec<f64>,
    pub dnet: Vec<f64>,
}

impl PromptGradients {
    pub fn zeros(state: &PromptState) -> Self {
        Self { cnet: vec![0.0; state.cnet.net.len()], dnet: vec![0.0; state.dnet.net.len()] }
    }

    pub fn add(&mut self, other: &PromptGradients) {
        linalg::add_assign(&mut self.cnet, &other.cnet);
        linalg::add_assign(&mut self.dnet, &other.dnet);
    }

    pub fn is_finite(&self) -> bool {
        self.cnet.iter().chain(&self.dnet).all(|v| v.is_finite())
    }
}

impl PromptState {
    /// Hidden layers get seeded Glorot weights, final layers start at zero.
    pub fn new(
        p_origin: Vec<Vec<f64>>,
        token_dim: usize,
        embed_dim: usize,
        cfg: &NetConfig,
        seed_value: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if p_origin.is_empty() {
            return Err(Error::Config("no class prompts".into()));
        }
        let origin_len = p_origin[0].len();
        if origin_len == 0 || origin_len % token_dim != 0 || p_origin.iter().any(|p| p.len() != origin_len) {
            return Err(Error::Shape("class prompts must share one non-empty length".into()));
        }
        let mut rng = seed::rng(seed_value, "prompt-cnet", 0);
        let cnet = Mlp::init(&cfg.layer_dims(embed_dim, token_dim), &mut rng, true);
        let mut rng = seed::rng(seed_value, "prompt-dnet", 0);
        let dnet = Mlp::init(&cfg.layer_dims(embed_dim, cfg.domain_tokens.max(1) * token_dim), &mut rng, true);
        Ok(Self {
            p_origin,
            token_dim,
            cnet: CNetParams { net: cnet },
            dnet: DNetParams { net: dnet, tokens: cfg.domain_tokens },
        })
    }

    pub fn n_classes(&self) -> usize {
        self.p_origin.len()
    }

    pub fn token_dim(&self) -> usize {
        self.token_dim
    }

    pub fn origin_len(&self) -> usize {
        self.p_origin[0].len() / self.token_dim
    }

    pub fn domain_len(&self) -> usize {
        self.dnet.tokens
    }

    pub fn p_origin(&self) -> &[Vec<f64>] {
        &self.p_origin
    }

    /// Length of a composed prompt under `flags`.
    pub fn prompt_len(&self, flags: PromptFlags) -> usize {
        self.origin_len() + if flags.use_dnet { self.domain_len() } else { 0 }
    }

    /// All trainable values, θ1 then θ2.
    pub fn theta(&self) -> Vec<f64> {
        [self.cnet.net.params(), self.dnet.net.params()].concat()
    }
}

pub fn c_net_forward(theta1: &CNetParams, v: &Embedding) -> Vec<f64> {
    theta1.net.forward(v.as_slice()).output().to_vec()
}

pub fn d_net_forward(theta2: &DNetParams, v: &Embedding) -> Vec<f64> {
    let out = theta2.net.forward(v.as_slice()).output().to_vec();
    out[..theta2.tokens * (out.len() / theta2.tokens.max(1))].to_vec()
}

/// `domain_tokens ⊕ (p_origin[class] + offset)`, the offset broadcast over
/// every origin token.
pub fn compose_prompt(
    state: &PromptState,
    class: usize,
    offset: Option<&[f64]>,
    domain_tokens: Option<&[f64]>,
    max_len: usize,
) -> Result<Vec<f64>> {
    let dim = state.token_dim;
    let origin =
        state.p_origin.get(class).ok_or_else(|| Error::Shape(format!("class {class} of {}", state.n_classes())))?;
    let domain = domain_tokens.unwrap_or(&[]);
    if domain.len() % dim != 0 {
        return Err(Error::Shape("domain tokens are not a whole number of tokens".into()));
    }
    let len = (domain.len() + origin.len()) / dim;
    if len > max_len {
        return Err(Error::Length { len, max: max_len });
    }
    let mut out = Vec::with_capacity(len * dim);
    out.extend_from_slice(domain);
    match offset {
        Some(off) => {
            if off.len() != dim {
                return Err(Error::Shape(format!("offset of {} for tokens of {dim}", off.len())));
            }
            for tok in origin.chunks_exact(dim) {
                out.extend(tok.iter().zip(off).map(|(t, o)| t + o));
            }
        }
        None => out.extend_from_slice(origin),
    }
    Ok(out)
}

/// Network activations for one conditioning vector.
#[derive(Debug, Clone)]
pub struct NetCaches {
    pub cnet: Option<MlpCache>,
    pub dnet: Option<MlpCache>,
}

impl NetCaches {
    pub fn offset(&self) -> Option<&[f64]> {
        self.cnet.as_ref().map(MlpCache::output)
    }

    pub fn domain(&self) -> Option<&[f64]> {
        self.dnet.as_ref().map(MlpCache::output)
    }
}

/// Runs the enabled networks on a conditioning vector.
pub fn run_nets(state: &PromptState, cond: &[f64], flags: PromptFlags) -> NetCaches {
    NetCaches {
        cnet: flags.use_cnet.then(|| state.cnet.net.forward(cond)),
        dnet: (flags.use_dnet && state.dnet.tokens > 0).then(|| state.dnet.net.forward(cond)),
    }
}

/// Routes per-token gradients of a composed prompt back into θ1 and θ2.
///
/// The c-net receives the sum of the gradients over the origin-token slots
/// (its offset is broadcast); the d-net receives the gradients of the first
/// `L_d` slots. Gradients are accumulated into `grads`. Since the routing is
/// linear, `upstream` may already be summed over several classes that share
/// the same conditioning vector.
pub fn prompt_backward(state: &PromptState, caches: &NetCaches, upstream: &[f64], grads: &mut PromptGradients) {
    let dim = state.token_dim;
    let dom_len = if caches.dnet.is_some() { state.dnet.tokens * dim } else { 0 };
    if let Some(c) = &caches.cnet {
        let mut d_off = vec![0.0; dim];
        for tok in upstream[dom_len..].chunks_exact(dim) {
            linalg::add_assign(&mut d_off, tok);
        }
        state.cnet.net.backward(c, &d_off, Some(&mut grads.cnet));
    }
    if let Some(c) = &caches.dnet {
        state.dnet.net.backward(c, &upstream[..dom_len], Some(&mut grads.dnet));
    }
}

/// Gradient of `⟨upstream, compose_prompt(class, c_net(v), d_net(v))⟩` with
/// respect to θ1 and θ2.
pub fn prompt_vjp(state: &PromptState, v: &Embedding, flags: PromptFlags, upstream: &[f64]) -> Result<PromptGradients> {
    let caches = run_nets(state, v.as_slice(), flags);
    if upstream.len() != state.prompt_len(flags) * state.token_dim {
        return Err(Error::Shape(format!(
            "upstream of {} values for a prompt of {} tokens",
            upstream.len(),
            state.prompt_len(flags)
        )));
    }
    let mut g = PromptGradients::zeros(state);
    prompt_backward(state, &caches, upstream, &mut g);
    Ok(g)
}
