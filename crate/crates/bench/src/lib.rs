//! Fixtures shared by the benchmarks.

use mcgtta_core::harness::{
    gen_dataset, init_prompt_state, prepare_views, ExperimentConfig, Split, SyntheticDatasetSpec,
};
use mcgtta_core::{Embedding, MelConfig, ModelDims, PromptState, ToyModel, Waveform};

/// One second of synthetic audio at 44.1 kHz.
pub fn clip() -> Waveform {
    let spec = SyntheticDatasetSpec { n_classes: 2, samples_per_class: 1, ..Default::default() };
    gen_dataset(&spec, Split::Test).expect("valid spec").clips.remove(0)
}

/// Untrained default-size model with a batch of view embeddings and fresh prompt networks.
pub fn adaptation_fixture(batch: usize) -> (ToyModel, PromptState, Vec<Vec<Embedding>>, ExperimentConfig) {
    let model = ToyModel::init(ModelDims::default(), 0.07, MelConfig::default(), 44_100, 0);
    let exp = ExperimentConfig::default();
    let clips = vec![clip(); batch];
    let views = prepare_views(&model, &clips, &exp, 0).expect("views");
    let state = init_prompt_state(&model, 8, &exp.net, 0).expect("prompt state");
    (model, state, views, exp)
}
