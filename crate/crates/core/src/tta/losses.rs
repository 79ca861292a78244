use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard inside the entropy logarithm.
pub const LOG_EPS: f64 = 1e-12;

/// Which parts of the method are switched off.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub disable_cnet: bool,
    pub disable_dnet: bool,
    pub disable_contrastive: bool,
    pub disable_entropy: bool,
}

impl Ablation {
    pub fn validate(&self) -> Result<()> {
        if self.disable_cnet && self.disable_dnet {
            return Err(Error::Config("both prompt networks disabled: nothing to adapt".into()));
        }
        if self.disable_contrastive && self.disable_entropy {
            return Err(Error::Config("both losses disabled".into()));
        }
        Ok(())
    }
}

/// Loss values for one optimization step. Disabled terms are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub consistency: Option<f64>,
    pub contrastive: Option<f64>,
    pub final_loss: f64,
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().map(|&g| g * (g + LOG_EPS).ln()).sum::<f64>()
}

/// Mean self-entropy of the view-averaged distributions.
pub fn consistency_loss(g_avg: &[Vec<f64>]) -> f64 {
    if g_avg.is_empty() {
        return 0.0;
    }
    g_avg.iter().map(|p| entropy(p)).sum::<f64>() / g_avg.len() as f64
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Negative mean MSE over the `B(B−1)/2` unordered sample pairs.
/// A batch of one has no pairs and contributes zero.
pub fn contrastive_loss(g_avg: &[Vec<f64>]) -> f64 {
    let b = g_avg.len();
    if b < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..b {
        for j in i + 1..b {
            total += mse(&g_avg[i], &g_avg[j]);
        }
    }
    -total / (b * (b - 1) / 2) as f64
}

/// `L_consistency + λ·L_contrastive` with disabled terms dropped.
pub fn final_loss(consistency: f64, contrastive: f64, lambda: f64, ablation: &Ablation) -> Result<f64> {
    if ablation.disable_contrastive && ablation.disable_entropy {
        return Err(Error::Config("both losses disabled".into()));
    }
    let mut l = 0.0;
    if !ablation.disable_entropy {
        l += consistency;
    }
    if !ablation.disable_contrastive {
        l += lambda * contrastive;
    }
    Ok(l)
}

pub fn loss_report(g_avg: &[Vec<f64>], lambda: f64, ablation: &Ablation) -> Result<LossReport> {
    let cons = consistency_loss(g_avg);
    let contr = contrastive_loss(g_avg);
    Ok(LossReport {
        consistency: (!ablation.disable_entropy).then_some(cons),
        contrastive: (!ablation.disable_contrastive).then_some(contr),
        final_loss: final_loss(cons, contr, lambda, ablation)?,
    })
}

/// `∂L_final / ∂g_avg[b]` for every sample in the batch.
pub fn loss_grad(g_avg: &[Vec<f64>], lambda: f64, ablation: &Ablation) -> Vec<Vec<f64>> {
    let b = g_avg.len();
    let mut grads: Vec<Vec<f64>> = g_avg.iter().map(|p| vec![0.0; p.len()]).collect();
    if !ablation.disable_entropy {
        for (g, p) in grads.iter_mut().zip(g_avg) {
            for (gc, &pc) in g.iter_mut().zip(p) {
                *gc -= ((pc + LOG_EPS).ln() + pc / (pc + LOG_EPS)) / b as f64;
            }
        }
    }
    if !ablation.disable_contrastive && b >= 2 {
        let pairs = (b * (b - 1) / 2) as f64;
        for k in 0..b {
            let n = g_avg[k].len() as f64;
            for l in 0..b {
                if l == k {
                    continue;
                }
                for c in 0..g_avg[k].len() {
                    grads[k][c] -= lambda * 2.0 * (g_avg[k][c] - g_avg[l][c]) / (n * pairs);
                }
            }
        }
    }
    grads
}
