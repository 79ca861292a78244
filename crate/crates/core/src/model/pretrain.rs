//! One-time contrastive pretraining of the toy model on paired synthetic
//! clips and class prompts (symmetric cross-entropy over in-batch pairs).

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{pooled_features, Embedding, ToyModel};
use crate::dsp::{normalize, MelSpectrogram, NormStats};
use crate::error::{Error, Result};
use crate::linalg::{self, normalize_backward, softmax};
use crate::model::text::{encode_text, text_backward};
use crate::seed;
use crate::tta::{adamw_step, AdamWParams, OptimizerState};

#[derive(Debug, Clone)]
pub struct LabeledClip {
    pub mel: MelSpectrogram,
    pub label: usize,
    /// Token ids describing the recording condition, placed in the prefix
    /// slots of the paired prompt. Empty for clean clips.
    pub caption: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PretrainData {
    pub train: Vec<LabeledClip>,
    pub heldout: Vec<LabeledClip>,
    /// Token ids of each class prompt.
    pub class_prompts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub max_epochs: usize,
    /// Training continues at least this long even once the target is met.
    pub min_epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub target_accuracy: f64,
    /// Zero tokens occasionally prepended to class prompts so the encoder
    /// sees sequences shaped like domain-prompted ones.
    pub prefix_pad: usize,
    pub prefix_pad_prob: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 60,
            min_epochs: 10,
            lr: 3e-3,
            weight_decay: 1e-4,
            target_accuracy: 0.6,
            prefix_pad: 4,
            prefix_pad_prob: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub epochs: usize,
    pub heldout_accuracy: f64,
    pub loss_trace: Vec<f64>,
}

/// Fraction of clips whose argmax class over plain prompts is correct.
pub fn zero_shot_accuracy(model: &ToyModel, clips: &[LabeledClip], class_prompts: &[Vec<usize>]) -> Result<f64> {
    let texts =
        class_prompts.iter().map(|ids| model.embed_text(&model.tokens.lookup(ids)?)).collect::<Result<Vec<_>>>()?;
    let mut correct = 0usize;
    for clip in clips {
        let v = model.embed_audio(&clip.mel)?;
        let scores: Vec<f64> = texts.iter().map(|u| linalg::dot(v.as_slice(), u.as_slice())).collect();
        correct += usize::from(linalg::argmax(&scores) == clip.label);
    }
    Ok(correct as f64 / clips.len().max(1) as f64)
}

struct Slots {
    tokens: OptimizerState,
    positional: OptimizerState,
    audio: OptimizerState,
    block: OptimizerState,
    proj: OptimizerState,
}

/// Trains every parameter of `model` in place and freezes normalization stats.
pub fn pretrain_toy(model: &mut ToyModel, data: &PretrainData, cfg: &PretrainConfig) -> Result<PretrainReport> {
    let n_classes = data.class_prompts.len();
    if n_classes < 2 {
        return Err(Error::Config("pretraining needs at least two classes".into()));
    }
    let train_mels: Vec<MelSpectrogram> = data.train.iter().map(|c| c.mel.clone()).collect();
    model.norm = NormStats::fit(&train_mels)?;
    let feats =
        data.train.iter().map(|c| Ok(pooled_features(&normalize(&c.mel, &model.norm)?))).collect::<Result<Vec<_>>>()?;
    // buckets: clean clips of each class, then captioned clips of each class
    let captioned = data.train.iter().any(|c| !c.caption.is_empty());
    let n_buckets = if captioned { 2 * n_classes } else { n_classes };
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); n_buckets];
    for (i, c) in data.train.iter().enumerate() {
        if c.label >= n_classes {
            return Err(Error::Config(format!("label {} without a class prompt", c.label)));
        }
        if c.caption.len() > cfg.prefix_pad {
            return Err(Error::Config(format!(
                "caption of {} words exceeds prefix of {}",
                c.caption.len(),
                cfg.prefix_pad
            )));
        }
        buckets[c.label + if c.caption.is_empty() { 0 } else { n_classes }].push(i);
    }
    let per_bucket = buckets.iter().map(Vec::len).min().unwrap_or(0);
    if per_bucket == 0 {
        return Err(Error::Config("every class needs at least one training clip of each kind".into()));
    }

    let hyper = AdamWParams { weight_decay: cfg.weight_decay, ..AdamWParams::default() };
    let mut slots = Slots {
        tokens: OptimizerState::new(model.tokens.table.len()),
        positional: OptimizerState::new(model.text.positional.len()),
        audio: OptimizerState::new(model.audio.net.len()),
        block: OptimizerState::new(model.text.block.len()),
        proj: OptimizerState::new(model.text.proj.len()),
    };
    let dim = model.dims.token;
    let tau = model.tau;
    let mut loss_trace = Vec::new();
    let mut accuracy = 0.0;

    for epoch in 0..cfg.max_epochs {
        let mut rng = seed::rng(cfg.seed, "pretrain-epoch", epoch as u64);
        for idx in &mut buckets {
            idx.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for b in 0..per_bucket {
            let pad = rng.gen_bool(cfg.prefix_pad_prob);
            let clips: Vec<&LabeledClip> = buckets.iter().map(|idx| &data.train[idx[b]]).collect();
            // text side: the caption of each clip, padded to the prefix
            // length, then its class prompt
            let mut token_ids = Vec::with_capacity(n_buckets);
            let mut text_caches = Vec::with_capacity(n_buckets);
            for clip in &clips {
                let mut ids: Vec<Option<usize>> = Vec::new();
                if pad || !clip.caption.is_empty() {
                    ids.extend(clip.caption.iter().map(|&w| Some(w)));
                    ids.resize(cfg.prefix_pad, None);
                }
                ids.extend(data.class_prompts[clip.label].iter().map(|&w| Some(w)));
                let mut seq = Vec::with_capacity(ids.len() * dim);
                for id in &ids {
                    match id {
                        Some(w) => seq.extend(model.tokens.lookup(&[*w])?),
                        None => seq.extend(std::iter::repeat(0.0).take(dim)),
                    }
                }
                text_caches.push(encode_text(&seq, &model.text)?);
                token_ids.push(ids);
            }
            // audio side
            let audio_caches: Vec<_> = buckets.iter().map(|idx| model.audio.net.forward(&feats[idx[b]])).collect();
            let audio_emb =
                audio_caches.iter().map(|c| Embedding::normalize(c.output().to_vec())).collect::<Result<Vec<_>>>()?;

            let scores: Vec<Vec<f64>> = audio_emb
                .iter()
                .map(|(a, _)| {
                    text_caches.iter().map(|t| linalg::dot(a.as_slice(), t.embedding.as_slice()) / tau).collect()
                })
                .collect();
            let rows: Vec<Vec<f64>> = scores.iter().map(|r| softmax(r)).collect();
            let n_classes = n_buckets;
            let cols: Vec<Vec<f64>> =
                (0..n_classes).map(|j| softmax(&scores.iter().map(|r| r[j]).collect::<Vec<_>>())).collect();
            let nf = n_classes as f64;
            epoch_loss += (0..n_classes).map(|i| -(rows[i][i].ln() + cols[i][i].ln()) / (2.0 * nf)).sum::<f64>();
            // d loss / d score[i][j]
            let d_scores: Vec<Vec<f64>> = (0..n_classes)
                .map(|i| {
                    (0..n_classes)
                        .map(|j| {
                            let eye = if i == j { 1.0 } else { 0.0 };
                            ((rows[i][j] - eye) + (cols[j][i] - eye)) / (2.0 * nf)
                        })
                        .collect()
                })
                .collect();

            let mut g_audio = vec![0.0; model.audio.net.len()];
            let mut g_text = model.text.zero_grads();
            let mut g_tokens = vec![0.0; model.tokens.table.len()];
            for i in 0..n_classes {
                let mut da = vec![0.0; model.dims.embed];
                for j in 0..n_classes {
                    let t = text_caches[j].embedding.as_slice();
                    da.iter_mut().zip(t).for_each(|(d, tv)| *d += d_scores[i][j] * tv / tau);
                }
                let (a, n) = &audio_emb[i];
                let dy = normalize_backward(a.as_slice(), *n, &da);
                model.audio.net.backward(&audio_caches[i], &dy, Some(&mut g_audio));
            }
            for j in 0..n_classes {
                let mut dt = vec![0.0; model.dims.embed];
                for i in 0..n_classes {
                    let a = audio_emb[i].0.as_slice();
                    dt.iter_mut().zip(a).for_each(|(d, av)| *d += d_scores[i][j] * av / tau);
                }
                let d_tok = text_backward(&text_caches[j], &model.text, &dt, Some(&mut g_text));
                for (k, id) in token_ids[j].iter().enumerate() {
                    if let Some(id) = *id {
                        let src = &d_tok[k * dim..(k + 1) * dim];
                        linalg::add_assign(&mut g_tokens[id * dim..(id + 1) * dim], src);
                    }
                }
            }
            adamw_step(&mut model.tokens.table, &g_tokens, &mut slots.tokens, cfg.lr, &hyper);
            adamw_step(&mut model.text.positional, &g_text.positional, &mut slots.positional, cfg.lr, &hyper);
            adamw_step(model.audio.net.params_mut(), &g_audio, &mut slots.audio, cfg.lr, &hyper);
            adamw_step(model.text.block.params_mut(), &g_text.block, &mut slots.block, cfg.lr, &hyper);
            adamw_step(model.text.proj.params_mut(), &g_text.proj, &mut slots.proj, cfg.lr, &hyper);
        }
        let mean_loss = epoch_loss / per_bucket as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Numerical(format!("pretraining loss became {mean_loss} at epoch {epoch}")));
        }
        loss_trace.push(mean_loss);
        accuracy = zero_shot_accuracy(model, &data.heldout, &data.class_prompts)?;
        if epoch + 1 >= cfg.min_epochs && accuracy >= cfg.target_accuracy {
            return Ok(PretrainReport { epochs: epoch + 1, heldout_accuracy: accuracy, loss_trace });
        }
    }
    Err(Error::PretrainDivergence { accuracy, epochs: cfg.max_epochs, target: cfg.target_accuracy })
}
