//! Finite-difference check of the full adaptation gradient.
//!
//! Each instance builds a small random model, random class prompts and random
//! view embeddings, perturbs both prompt networks away from their zero-init
//! so every path carries signal, and compares the analytic gradient of the
//! final loss against central differences for every θ1 and θ2 entry.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dsp::MelConfig;
use crate::error::Result;
use crate::model::{Embedding, ModelDims, ToyModel};
use crate::prompt::{NetConfig, PromptState};
use crate::seed;
use crate::tta::{backward_batch, forward_batch, loss_report, AdaptConfig, Conditioning};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub instances: usize,
    pub n_classes: usize,
    pub n_views: usize,
    pub batch: usize,
    pub origin_len: usize,
    pub domain_tokens: usize,
    /// Shared width of embeddings, tokens and hidden layers.
    pub dim: usize,
    pub depth: usize,
    pub h: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            instances: 20,
            n_classes: 3,
            n_views: 3,
            batch: 2,
            origin_len: 2,
            domain_tokens: 1,
            dim: 8,
            depth: 2,
            h: 1e-5,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub instances: usize,
    pub params_checked: usize,
    pub max_rel_error: f64,
    /// (instance, "theta1" | "theta2", parameter index) of the worst entry.
    pub worst: Option<(usize, String, usize)>,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

struct Instance {
    model: ToyModel,
    state: PromptState,
    batch: Vec<Vec<Embedding>>,
    cfg: AdaptConfig,
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> Embedding {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    Embedding::normalize(v).expect("gaussian vector is nonzero").0
}

fn instance(cfg: &GradCheckConfig, index: usize) -> Result<Instance> {
    let d = cfg.dim;
    let dims =
        ModelDims { embed: d, token: d, hidden: d, vocab: 8, max_len: cfg.origin_len + cfg.domain_tokens, n_mels: 8 };
    let model = ToyModel::init(
        dims,
        0.07,
        MelConfig::default(),
        44_100,
        seed::derive(cfg.seed, "gradcheck-model", index as u64),
    );
    let mut rng = seed::rng(cfg.seed, "gradcheck", index as u64);
    let origin = (0..cfg.n_classes)
        .map(|_| (0..cfg.origin_len * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let net = NetConfig { depth: cfg.depth, width_mult: 1, domain_tokens: cfg.domain_tokens };
    let mut state = PromptState::new(origin, d, d, &net, rng.gen())?;
    for p in state.cnet.net.params_mut().iter_mut().chain(state.dnet.net.params_mut()) {
        *p += 0.3 * rng.sample::<f64, _>(StandardNormal);
    }
    let batch = (0..cfg.batch).map(|_| (0..cfg.n_views).map(|_| random_unit(&mut rng, d)).collect()).collect();
    let adapt = AdaptConfig {
        lambda: rng.gen_range(0.5..2.0),
        conditioning: if index % 2 == 0 { Conditioning::PerView } else { Conditioning::MeanOfViews },
        ..AdaptConfig::default()
    };
    Ok(Instance { model, state, batch, cfg: adapt })
}

fn loss(inst: &Instance, state: &PromptState) -> Result<f64> {
    let fwd = forward_batch(&inst.model, state, &inst.cfg, &inst.batch)?;
    Ok(loss_report(&fwd.g_avg(), inst.cfg.lambda, &inst.cfg.ablation)?.final_loss)
}

fn param_mut<'a>(s: &'a mut PromptState, net: &str, k: usize) -> &'a mut f64 {
    if net == "theta1" {
        &mut s.cnet.net.params_mut()[k]
    } else {
        &mut s.dnet.net.params_mut()[k]
    }
}

/// Largest relative error over every parameter of every instance.
pub fn run_gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut report = GradCheckReport { instances: cfg.instances, params_checked: 0, max_rel_error: 0.0, worst: None };
    for i in 0..cfg.instances {
        let inst = instance(cfg, i)?;
        let fwd = forward_batch(&inst.model, &inst.state, &inst.cfg, &inst.batch)?;
        let grads = backward_batch(&inst.model, &inst.state, &inst.cfg, &fwd)?;
        for (net, analytic) in [("theta1", &grads.cnet), ("theta2", &grads.dnet)] {
            for (k, &a) in analytic.iter().enumerate() {
                let mut probe = inst.state.clone();
                let x0 = *param_mut(&mut probe, net, k);
                *param_mut(&mut probe, net, k) = x0 + cfg.h;
                let up = loss(&inst, &probe)?;
                *param_mut(&mut probe, net, k) = x0 - cfg.h;
                let down = loss(&inst, &probe)?;
                let numeric = (up - down) / (2.0 * cfg.h);
                let err = relative_error(a, numeric, cfg.floor);
                report.params_checked += 1;
                if err > report.max_rel_error || report.worst.is_none() {
                    report.max_rel_error = err;
                    report.worst = Some((i, net.to_string(), k));
                }
            }
        }
    }
    Ok(report)
}
