#![allow(dead_code)]

use mcgtta_core::harness::class_prompts;
use mcgtta_core::{seed, Embedding, MelConfig, ModelDims, NetConfig, PromptState, ToyModel};
use rand_distr::{Distribution, StandardNormal};

pub fn small_dims() -> ModelDims {
    ModelDims { embed: 16, token: 16, hidden: 16, vocab: 32, max_len: 16, n_mels: 64 }
}

/// Untrained model; the adaptation math does not care whether it was pretrained.
pub fn random_model(seed_value: u64) -> ToyModel {
    ToyModel::init(small_dims(), 0.07, MelConfig::default(), 44_100, seed_value)
}

pub fn unit(dim: usize, rng: &mut impl rand::Rng) -> Embedding {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    Embedding::normalize(v).unwrap().0
}

/// `n` samples of `m` random view embeddings.
pub fn random_views(dim: usize, n: usize, m: usize, seed_value: u64) -> Vec<Vec<Embedding>> {
    let mut rng = seed::rng(seed_value, "test-views", 0);
    (0..n).map(|_| (0..m).map(|_| unit(dim, &mut rng)).collect()).collect()
}

pub fn state(model: &ToyModel, n_classes: usize, net: &NetConfig, seed_value: u64) -> PromptState {
    let origin = class_prompts(n_classes).iter().map(|ids| model.tokens.lookup(ids).unwrap()).collect();
    PromptState::new(origin, model.dims.token, model.dims.embed, net, seed_value).unwrap()
}
