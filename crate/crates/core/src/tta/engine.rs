use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adamw::{adamw_step, AdamWParams, OptimizerState};
use super::losses::{loss_grad, loss_report, Ablation, LossReport};
use crate::augment::ViewSet;
use crate::error::{Error, Result};
use crate::linalg::{self, argmax, softmax};
use crate::model::{text_backward, ClassTexts, Embedding, TextCache, ToyModel};
use crate::prompt::{compose_prompt, prompt_backward, run_nets, NetCaches, PromptFlags, PromptGradients, PromptState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Reset prompt networks and optimizer before every batch.
    Episodic,
    /// Carry state across the whole stream.
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conditioning {
    /// Each view conditions its own prompts.
    PerView,
    /// One prompt set conditioned on the normalized mean of the views.
    MeanOfViews,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub lr: f64,
    pub steps_per_batch: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub mode: Mode,
    pub ablation: Ablation,
    pub conditioning: Conditioning,
    pub adamw: AdamWParams,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            steps_per_batch: 1,
            batch_size: 5,
            lambda: 1.0,
            mode: Mode::Episodic,
            ablation: Ablation::default(),
            conditioning: Conditioning::PerView,
            adamw: AdamWParams::default(),
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda {} must be non-negative", self.lambda)));
        }
        self.ablation.validate()
    }

    pub fn flags(&self) -> PromptFlags {
        PromptFlags { use_cnet: !self.ablation.disable_cnet, use_dnet: !self.ablation.disable_dnet }
    }
}

/// Per-view class probabilities and their average for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSet {
    /// `M × N`, one softmax row per view.
    pub g: Vec<Vec<f64>>,
    pub g_avg: Vec<f64>,
}

impl DistributionSet {
    /// Largest deviation of any row (or of `g_avg`) from summing to one.
    pub fn max_sum_error(&self) -> f64 {
        self.g
            .iter()
            .chain(std::iter::once(&self.g_avg))
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Views that share one conditioning vector and therefore one prompt set.
#[derive(Debug, Clone)]
struct PromptGroup {
    views: Vec<usize>,
    nets: NetCaches,
    texts: Vec<TextCache>,
}

#[derive(Debug, Clone)]
struct SampleForward {
    views: Vec<Embedding>,
    dist: DistributionSet,
    groups: Vec<PromptGroup>,
}

/// Everything the backward pass needs from a forward pass over a batch.
#[derive(Debug, Clone)]
pub struct BatchForward {
    samples: Vec<SampleForward>,
}

impl BatchForward {
    pub fn distributions(&self) -> Vec<&DistributionSet> {
        self.samples.iter().map(|s| &s.dist).collect()
    }

    pub fn g_avg(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.dist.g_avg.clone()).collect()
    }

    pub fn max_sum_error(&self) -> f64 {
        self.samples.iter().map(|s| s.dist.max_sum_error()).fold(0.0, f64::max)
    }
}

/// Audio embeddings of every view; constant during adaptation.
pub fn encode_views(model: &ToyModel, views: &ViewSet) -> Result<Vec<Embedding>> {
    views.views.iter().map(|v| model.embed_audio(v)).collect()
}

fn mean_condition(views: &[Embedding]) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; views[0].dim()];
    for v in views {
        linalg::add_assign(&mut acc, v.as_slice());
    }
    Embedding::normalize(acc).map(|(e, _)| e.as_slice().to_vec())
}

fn forward_sample(
    model: &ToyModel,
    state: &PromptState,
    cfg: &AdaptConfig,
    views: &[Embedding],
) -> Result<SampleForward> {
    if views.is_empty() {
        return Err(Error::Shape("sample without views".into()));
    }
    let flags = cfg.flags();
    let make_group = |cond: &[f64], members: Vec<usize>| -> Result<PromptGroup> {
        let nets = run_nets(state, cond, flags);
        let texts = (0..state.n_classes())
            .map(|c| {
                let tokens = compose_prompt(state, c, nets.offset(), nets.domain(), model.text.max_len())?;
                crate::model::encode_text(&tokens, &model.text)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PromptGroup { views: members, nets, texts })
    };
    let groups = match cfg.conditioning {
        Conditioning::PerView => {
            views.iter().enumerate().map(|(i, v)| make_group(v.as_slice(), vec![i])).collect::<Result<Vec<_>>>()?
        }
        Conditioning::MeanOfViews => vec![make_group(&mean_condition(views)?, (0..views.len()).collect())?],
    };
    let mut g = vec![Vec::new(); views.len()];
    for group in &groups {
        let texts: Vec<Embedding> = group.texts.iter().map(|t| t.embedding.clone()).collect();
        let members: Vec<Embedding> = group.views.iter().map(|&i| views[i].clone()).collect();
        let scores = crate::model::logits(&members, ClassTexts::Shared(&texts), model.tau)?;
        for (&i, row) in group.views.iter().zip(scores) {
            g[i] = softmax(&row);
        }
    }
    let n = state.n_classes();
    let mut g_avg = vec![0.0; n];
    for row in &g {
        linalg::add_assign(&mut g_avg, row);
    }
    g_avg.iter_mut().for_each(|p| *p /= views.len() as f64);
    Ok(SampleForward { views: views.to_vec(), dist: DistributionSet { g, g_avg }, groups })
}

/// Class distributions for every sample of a batch (`batch[b]` holds the view
/// embeddings of sample `b`).
pub fn forward_batch(
    model: &ToyModel,
    state: &PromptState,
    cfg: &AdaptConfig,
    batch: &[Vec<Embedding>],
) -> Result<BatchForward> {
    let samples = batch.par_iter().map(|views| forward_sample(model, state, cfg, views)).collect::<Result<Vec<_>>>()?;
    Ok(BatchForward { samples })
}

fn backward_sample(model: &ToyModel, state: &PromptState, s: &SampleForward, d_gavg: &[f64]) -> PromptGradients {
    let m = s.views.len() as f64;
    let mut grads = PromptGradients::zeros(state);
    let dim = state.token_dim();
    for group in &s.groups {
        // ∂L/∂u_c accumulated over the views of this group
        let mut d_text = vec![vec![0.0; model.dims.embed]; state.n_classes()];
        for &i in &group.views {
            let p = &s.dist.g[i];
            let d_p: Vec<f64> = d_gavg.iter().map(|d| d / m).collect();
            let inner = linalg::dot(&d_p, p);
            for (c, du) in d_text.iter_mut().enumerate() {
                let d_logit = p[c] * (d_p[c] - inner);
                for (u, v) in du.iter_mut().zip(s.views[i].as_slice()) {
                    *u += d_logit * v / model.tau;
                }
            }
        }
        let mut d_tokens = vec![0.0; group.texts[0].len() * dim];
        for (cache, du) in group.texts.iter().zip(&d_text) {
            linalg::add_assign(&mut d_tokens, &text_backward(cache, &model.text, du, None));
        }
        prompt_backward(state, &group.nets, &d_tokens, &mut grads);
    }
    grads
}

/// Exact gradient of the final loss with respect to θ1 and θ2.
pub fn backward_batch(
    model: &ToyModel,
    state: &PromptState,
    cfg: &AdaptConfig,
    fwd: &BatchForward,
) -> Result<PromptGradients> {
    let d_gavg = loss_grad(&fwd.g_avg(), cfg.lambda, &cfg.ablation);
    backward_from_gavg(model, state, fwd, &d_gavg)
}

/// Pulls an arbitrary upstream gradient on each sample's `g_avg` back to θ1
/// and θ2.
pub fn backward_from_gavg(
    model: &ToyModel,
    state: &PromptState,
    fwd: &BatchForward,
    d_gavg: &[Vec<f64>],
) -> Result<PromptGradients> {
    if d_gavg.len() != fwd.samples.len() {
        return Err(Error::Shape(format!("{} upstream rows for {} samples", d_gavg.len(), fwd.samples.len())));
    }
    let per_sample: Vec<PromptGradients> =
        fwd.samples.par_iter().zip(d_gavg).map(|(s, d)| backward_sample(model, state, s, d)).collect();
    // fixed-order reduction keeps results bit-reproducible
    let mut total = PromptGradients::zeros(state);
    for g in &per_sample {
        total.add(g);
    }
    if !total.is_finite() {
        return Err(Error::Numerical("non-finite prompt gradient".into()));
    }
    Ok(total)
}

/// AdamW moments for both prompt networks.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptOptimizer {
    pub cnet: OptimizerState,
    pub dnet: OptimizerState,
}

impl PromptOptimizer {
    pub fn new(state: &PromptState) -> Self {
        Self { cnet: OptimizerState::new(state.cnet.net.len()), dnet: OptimizerState::new(state.dnet.net.len()) }
    }

    /// Applies one update; disabled networks are left untouched.
    pub fn step(&mut self, state: &mut PromptState, grads: &PromptGradients, cfg: &AdaptConfig) {
        if !cfg.ablation.disable_cnet {
            adamw_step(state.cnet.net.params_mut(), &grads.cnet, &mut self.cnet, cfg.lr, &cfg.adamw);
        }
        if !cfg.ablation.disable_dnet {
            adamw_step(state.dnet.net.params_mut(), &grads.dnet, &mut self.dnet, cfg.lr, &cfg.adamw);
        }
    }
}

/// One optimization step's losses, written to the run trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub batch: usize,
    pub step: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consistency: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contrastive: Option<f64>,
    pub final_loss: f64,
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub predictions: Vec<usize>,
    /// Losses before each update.
    pub trace: Vec<LossReport>,
    /// Losses under the final parameters.
    pub final_report: LossReport,
    pub distributions: Vec<DistributionSet>,
    pub max_sum_error: f64,
}

const SUM_TOLERANCE: f64 = 1e-6;

fn check_step(fwd: &BatchForward, report: &LossReport, n_classes: usize) -> Result<()> {
    let err = fwd.max_sum_error();
    if err > SUM_TOLERANCE {
        return Err(Error::Numerical(format!("distribution sums deviate from 1 by {err:e}")));
    }
    if let Some(c) = report.consistency {
        if !(-1e-12..=(n_classes as f64).ln() + 1e-9).contains(&c) {
            return Err(Error::Numerical(format!("consistency loss {c} outside [0, ln N]")));
        }
    }
    if let Some(k) = report.contrastive {
        // the MSE of two distributions is at most 2/N
        if !(-2.0 / n_classes as f64 - 1e-12..=0.0).contains(&k) {
            return Err(Error::Numerical(format!("contrastive loss {k} outside [-2/N, 0]")));
        }
    }
    Ok(())
}

/// Argmax of each sample's view-averaged distribution (lowest index on ties).
pub fn predict(fwd: &BatchForward) -> Vec<usize> {
    fwd.samples.iter().map(|s| argmax(&s.dist.g_avg)).collect()
}

/// `steps_per_batch` forward/backward/update iterations, then predictions
/// under the updated parameters.
pub fn adapt_batch(
    model: &ToyModel,
    state: &mut PromptState,
    opt: &mut PromptOptimizer,
    batch: &[Vec<Embedding>],
    cfg: &AdaptConfig,
) -> Result<BatchOutcome> {
    cfg.validate()?;
    let n = state.n_classes();
    let mut trace = Vec::with_capacity(cfg.steps_per_batch);
    let mut max_err: f64 = 0.0;
    for _ in 0..cfg.steps_per_batch {
        let fwd = forward_batch(model, state, cfg, batch)?;
        let report = loss_report(&fwd.g_avg(), cfg.lambda, &cfg.ablation)?;
        check_step(&fwd, &report, n)?;
        max_err = max_err.max(fwd.max_sum_error());
        let grads = backward_batch(model, state, cfg, &fwd)?;
        opt.step(state, &grads, cfg);
        trace.push(report);
    }
    let fwd = forward_batch(model, state, cfg, batch)?;
    let final_report = loss_report(&fwd.g_avg(), cfg.lambda, &cfg.ablation)?;
    check_step(&fwd, &final_report, n)?;
    max_err = max_err.max(fwd.max_sum_error());
    Ok(BatchOutcome {
        predictions: predict(&fwd),
        trace,
        final_report,
        distributions: fwd.samples.into_iter().map(|s| s.dist).collect(),
        max_sum_error: max_err,
    })
}

/// Result of adapting over a whole label-free stream.
#[derive(Debug, Clone)]
pub struct AdaptRun {
    pub config: AdaptConfig,
    pub initial: PromptState,
    pub final_state: PromptState,
    pub optimizer: PromptOptimizer,
    pub trace: Vec<StepRecord>,
    pub predictions: Vec<usize>,
    /// Batch indices at which θ and the optimizer were reset.
    pub resets: Vec<usize>,
    /// SHA-256 of θ after each batch.
    pub theta_digests: Vec<String>,
    /// Losses under each batch's final parameters.
    pub batch_final: Vec<LossReport>,
    pub max_sum_error: f64,
}

pub(crate) fn theta_digest(state: &PromptState) -> String {
    let bytes: Vec<u8> = state.theta().iter().flat_map(|v| v.to_le_bytes()).collect();
    crate::model::sha256_hex(&bytes)
}

/// Adapts over `samples` (view embeddings only, never labels) in batches of
/// `cfg.batch_size`.
pub fn run(model: &ToyModel, initial: &PromptState, samples: &[Vec<Embedding>], cfg: &AdaptConfig) -> Result<AdaptRun> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    let mut state = initial.clone();
    let mut opt = PromptOptimizer::new(initial);
    let mut trace = Vec::new();
    let mut predictions = Vec::with_capacity(samples.len());
    let mut resets = Vec::new();
    let mut digests = Vec::new();
    let mut batch_final = Vec::new();
    let mut max_err: f64 = 0.0;
    for (b, batch) in samples.chunks(cfg.batch_size).enumerate() {
        if cfg.mode == Mode::Episodic {
            state = initial.clone();
            opt = PromptOptimizer::new(initial);
            resets.push(b);
        }
        let out = adapt_batch(model, &mut state, &mut opt, batch, cfg)?;
        trace.extend(out.trace.iter().enumerate().map(|(step, r)| StepRecord {
            batch: b,
            step,
            consistency: r.consistency,
            contrastive: r.contrastive,
            final_loss: r.final_loss,
        }));
        predictions.extend(out.predictions);
        digests.push(theta_digest(&state));
        batch_final.push(out.final_report);
        max_err = max_err.max(out.max_sum_error);
    }
    Ok(AdaptRun {
        config: *cfg,
        initial: initial.clone(),
        final_state: state,
        optimizer: opt,
        trace,
        predictions,
        resets,
        theta_digests: digests,
        batch_final,
        max_sum_error: max_err,
    })
}
