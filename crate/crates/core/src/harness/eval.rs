use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rand::Rng;

use super::synth::{
    apply_shift, class_prompts, domain_words, gen_dataset, shift_waveform, Dataset, DomainShiftSpec, Split,
    SyntheticDatasetSpec, DOMAIN_WORDS, PROMPT_PREFIX,
};
use crate::augment::{make_views, AugmentConfig};
use crate::dsp::{MelConfig, MelFrontend, Waveform};
use crate::error::{Error, Result};
use crate::linalg::{argmax, dot};
use crate::model::{
    pretrain_toy, sha256_hex, Embedding, LabeledClip, ModelDims, PretrainConfig, PretrainData, PretrainReport, ToyModel,
};
use crate::prompt::{NetConfig, PromptState};
use crate::seed;
use crate::tta::{self, forward_batch, AdaptConfig, AdaptRun};

/// Classification accuracy with its raw counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class: Vec<f64>,
    pub n_correct: usize,
    pub n_total: usize,
}

impl Metrics {
    pub fn from_predictions(predictions: &[usize], labels: &[usize], n_classes: usize) -> Self {
        let mut hits = vec![0usize; n_classes];
        let mut totals = vec![0usize; n_classes];
        for (&p, &l) in predictions.iter().zip(labels) {
            totals[l] += 1;
            hits[l] += usize::from(p == l);
        }
        let n_correct: usize = hits.iter().sum();
        let n_total = predictions.len().min(labels.len());
        Self {
            accuracy: n_correct as f64 / n_total.max(1) as f64,
            per_class: hits.iter().zip(&totals).map(|(&h, &t)| h as f64 / t.max(1) as f64).collect(),
            n_correct,
            n_total,
        }
    }
}

/// Everything that shapes one adaptation experiment except the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub adapt: AdaptConfig,
    pub net: NetConfig,
    pub n_views: usize,
    pub max_time_mask: usize,
    pub max_freq_mask: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let aug = AugmentConfig::default();
        Self {
            adapt: AdaptConfig::default(),
            net: NetConfig::default(),
            n_views: aug.n_views,
            max_time_mask: aug.max_time_mask,
            max_freq_mask: aug.max_freq_mask,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_views == 0 {
            return Err(Error::Config("n_views must be at least 1".into()));
        }
        if self.max_time_mask == 0 || self.max_freq_mask == 0 {
            return Err(Error::Config("mask widths must be at least 1".into()));
        }
        self.adapt.validate()?;
        self.net.validate()
    }

    /// SHA-256 of the canonical JSON encoding; the seed is not part of it.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    fn augment(&self, seed_value: u64) -> AugmentConfig {
        AugmentConfig {
            n_views: self.n_views,
            max_time_mask: self.max_time_mask,
            max_freq_mask: self.max_freq_mask,
            seed: seed_value,
        }
    }
}

/// View embeddings of a dataset under one frozen model, labels kept aside.
#[derive(Debug, Clone)]
pub struct PreparedSet {
    pub views: Vec<Vec<Embedding>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

/// View embeddings of every clip; views of clip `i` are keyed by
/// `(seed, i)`, so they do not depend on thread scheduling.
pub fn prepare_views(
    model: &ToyModel,
    clips: &[Waveform],
    exp: &ExperimentConfig,
    seed_value: u64,
) -> Result<Vec<Vec<Embedding>>> {
    let frontend = MelFrontend::new(model.mel, model.sample_rate)?;
    clips
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let mel = frontend.compute(w)?;
            let vs = make_views(&mel, &exp.augment(seed::derive(seed_value, "views", i as u64)))?;
            tta::encode_views(model, &vs)
        })
        .collect()
}

pub fn prepare(model: &ToyModel, data: &Dataset, exp: &ExperimentConfig, seed_value: u64) -> Result<PreparedSet> {
    let views = prepare_views(model, &data.clips, exp, seed_value)?;
    Ok(PreparedSet { views, labels: data.labels.clone(), n_classes: data.n_classes })
}

fn plain_texts(model: &ToyModel, n_classes: usize) -> Result<Vec<Embedding>> {
    class_prompts(n_classes).iter().map(|ids| model.embed_text(&model.tokens.lookup(ids)?)).collect()
}

fn zero_shot_predictions(model: &ToyModel, first_views: &[&Embedding], n_classes: usize) -> Result<Vec<usize>> {
    let texts = plain_texts(model, n_classes)?;
    Ok(first_views
        .iter()
        .map(|v| argmax(&texts.iter().map(|u| dot(v.as_slice(), u.as_slice())).collect::<Vec<_>>()))
        .collect())
}

/// Plain-prompt predictions from the unaugmented clip.
pub fn evaluate_zero_shot(data: &Dataset, model: &ToyModel) -> Result<(Metrics, Vec<usize>)> {
    let frontend = MelFrontend::new(model.mel, model.sample_rate)?;
    let emb = data.clips.par_iter().map(|w| model.embed_audio(&frontend.compute(w)?)).collect::<Result<Vec<_>>>()?;
    let preds = zero_shot_predictions(model, &emb.iter().collect::<Vec<_>>(), data.n_classes)?;
    Ok((Metrics::from_predictions(&preds, &data.labels, data.n_classes), preds))
}

/// Fresh prompt networks over the model's class prompts.
pub fn init_prompt_state(model: &ToyModel, n_classes: usize, net: &NetConfig, seed_value: u64) -> Result<PromptState> {
    let origin = class_prompts(n_classes).iter().map(|ids| model.tokens.lookup(ids)).collect::<Result<Vec<_>>>()?;
    PromptState::new(origin, model.dims.token, model.dims.embed, net, seed::derive(seed_value, "prompt-nets", 0))
}

/// Predictions under fixed prompt-network parameters.
pub fn evaluate_frozen(
    model: &ToyModel,
    state: &PromptState,
    cfg: &AdaptConfig,
    views: &[Vec<Embedding>],
) -> Result<Vec<usize>> {
    let mut preds = Vec::with_capacity(views.len());
    for batch in views.chunks(cfg.batch_size.max(1)) {
        preds.extend(tta::predict(&forward_batch(model, state, cfg, batch)?));
    }
    Ok(preds)
}

/// One experiment's outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub zero_shot: Metrics,
    pub adapted: Metrics,
    pub delta: f64,
    pub final_consistency: Option<f64>,
    pub final_contrastive: Option<f64>,
    pub final_loss: f64,
    pub steps: usize,
    pub labels: Vec<usize>,
    pub zero_shot_predictions: Vec<usize>,
    pub predictions: Vec<usize>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

/// Runs adaptation on the label-free views and scores it against the labels.
pub fn evaluate_tta(
    model: &ToyModel,
    set: &PreparedSet,
    exp: &ExperimentConfig,
    seed_value: u64,
    name: &str,
) -> Result<(RunReport, AdaptRun)> {
    exp.validate()?;
    let state = init_prompt_state(model, set.n_classes, &exp.net, seed_value)?;
    let run = tta::run(model, &state, &set.views, &exp.adapt)?;
    let report = score_run(model, set, exp, seed_value, name, &run)?;
    Ok((report, run))
}

/// Scores a finished run against the labels of the set it ran on.
pub fn score_run(
    model: &ToyModel,
    set: &PreparedSet,
    exp: &ExperimentConfig,
    seed_value: u64,
    name: &str,
    run: &AdaptRun,
) -> Result<RunReport> {
    if run.predictions.len() != set.labels.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", run.predictions.len(), set.labels.len())));
    }
    let firsts: Vec<&Embedding> = set.views.iter().map(|v| &v[0]).collect();
    let zs_preds = zero_shot_predictions(model, &firsts, set.n_classes)?;
    let zero_shot = Metrics::from_predictions(&zs_preds, &set.labels, set.n_classes);
    let adapted = Metrics::from_predictions(&run.predictions, &set.labels, set.n_classes);
    let finals = &run.batch_final;
    let opt_mean = |f: fn(&tta::LossReport) -> Option<f64>| -> Option<f64> {
        let v: Option<Vec<f64>> = finals.iter().map(f).collect();
        v.map(|v| mean(v.into_iter()))
    };
    let report = RunReport {
        name: name.into(),
        config: *exp,
        config_hash: exp.hash(),
        seed: seed_value,
        delta: adapted.accuracy - zero_shot.accuracy,
        zero_shot,
        adapted,
        final_consistency: opt_mean(|r| r.consistency),
        final_contrastive: opt_mean(|r| r.contrastive),
        final_loss: mean(finals.iter().map(|r| r.final_loss)),
        steps: run.trace.len(),
        labels: set.labels.clone(),
        zero_shot_predictions: zs_preds,
        predictions: run.predictions.clone(),
    };
    Ok(report)
}

/// Rows of the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationVariant {
    Full,
    NoContextNet,
    NoDomainNet,
    NoContrastive,
    NoEntropy,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 5] = [
        AblationVariant::Full,
        AblationVariant::NoContextNet,
        AblationVariant::NoDomainNet,
        AblationVariant::NoContrastive,
        AblationVariant::NoEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::NoContextNet => "wo-context",
            AblationVariant::NoDomainNet => "wo-domain",
            AblationVariant::NoContrastive => "wo-contrastive",
            AblationVariant::NoEntropy => "wo-entropy",
        }
    }

    pub fn apply(self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut e = *base;
        let a = &mut e.adapt.ablation;
        *a = Default::default();
        match self {
            AblationVariant::Full => {}
            AblationVariant::NoContextNet => a.disable_cnet = true,
            AblationVariant::NoDomainNet => a.disable_dnet = true,
            AblationVariant::NoContrastive => a.disable_contrastive = true,
            AblationVariant::NoEntropy => a.disable_entropy = true,
        }
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationCell {
    pub variant: AblationVariant,
    pub depth: usize,
    pub width_mult: usize,
}

impl AblationCell {
    /// Variant × depth 1–4 × width ×1/×2, variant-major.
    pub fn all() -> Vec<AblationCell> {
        let mut cells = Vec::with_capacity(40);
        for variant in AblationVariant::ALL {
            for depth in 1..=4 {
                for width_mult in [1, 2] {
                    cells.push(AblationCell { variant, depth, width_mult });
                }
            }
        }
        cells
    }

    pub fn name(&self) -> String {
        format!("{}/depth{}/x{}", self.variant.name(), self.depth, self.width_mult)
    }

    pub fn config(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut e = self.variant.apply(base);
        e.net.depth = self.depth;
        e.net.width_mult = self.width_mult;
        e
    }
}

/// The full ablation cross-product; cells run in parallel when `parallel`.
pub fn ablation_matrix(
    model: &ToyModel,
    set: &PreparedSet,
    base: &ExperimentConfig,
    seed_value: u64,
    parallel: bool,
) -> Result<Vec<RunReport>> {
    let cells = AblationCell::all();
    let one = |c: &AblationCell| evaluate_tta(model, set, &c.config(base), seed_value, &c.name()).map(|r| r.0);
    if parallel {
        cells.par_iter().map(one).collect()
    } else {
        cells.iter().map(one).collect()
    }
}

/// Accuracy of θ adapted on one shift (row) and evaluated on every shift
/// (column), next to each row's zero-shot accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossDomainMatrix {
    pub shifts: Vec<String>,
    /// Zero-shot accuracy on each shift.
    pub zero_shot: Vec<f64>,
    /// `accuracy[a][b]`: adapted online on shift `a`, frozen, tested on `b`.
    pub accuracy: Vec<Vec<f64>>,
}

impl CrossDomainMatrix {
    pub fn row_average(&self, a: usize) -> f64 {
        mean(self.accuracy[a].iter().copied())
    }

    /// Mean over test shifts of adapted minus zero-shot accuracy.
    pub fn row_average_delta(&self, a: usize) -> f64 {
        mean(self.accuracy[a].iter().zip(&self.zero_shot).map(|(x, z)| x - z))
    }

    pub fn diagonal_delta(&self, a: usize) -> f64 {
        self.accuracy[a][a] - self.zero_shot[a]
    }
}

pub fn cross_domain_matrix(
    model: &ToyModel,
    clean: &Dataset,
    shifts: &[DomainShiftSpec],
    exp: &ExperimentConfig,
    seed_value: u64,
) -> Result<CrossDomainMatrix> {
    if shifts.len() < 2 {
        return Err(Error::Config("cross-domain evaluation needs at least two shifts".into()));
    }
    exp.validate()?;
    let sets = shifts
        .iter()
        .map(|s| prepare(model, &apply_shift(clean, s, seed::derive(seed_value, "shift", 0))?, exp, seed_value))
        .collect::<Result<Vec<_>>>()?;
    let mut adapt_cfg = exp.adapt;
    adapt_cfg.mode = tta::Mode::Online;
    let mut zero_shot = Vec::with_capacity(shifts.len());
    let mut accuracy = Vec::with_capacity(shifts.len());
    for set in &sets {
        let firsts: Vec<&Embedding> = set.views.iter().map(|v| &v[0]).collect();
        let zs = zero_shot_predictions(model, &firsts, set.n_classes)?;
        zero_shot.push(Metrics::from_predictions(&zs, &set.labels, set.n_classes).accuracy);
        let state = init_prompt_state(model, set.n_classes, &exp.net, seed_value)?;
        let adapted = tta::run(model, &state, &set.views, &adapt_cfg)?.final_state;
        let row = sets
            .iter()
            .map(|target| {
                let preds = evaluate_frozen(model, &adapted, &adapt_cfg, &target.views)?;
                Ok(Metrics::from_predictions(&preds, &target.labels, target.n_classes).accuracy)
            })
            .collect::<Result<Vec<_>>>()?;
        accuracy.push(row);
    }
    Ok(CrossDomainMatrix { shifts: shifts.iter().map(ToString::to_string).collect(), zero_shot, accuracy })
}

/// Data, model shape and pretraining settings for the frozen toy model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToySetup {
    pub data: SyntheticDatasetSpec,
    pub pretrain_per_class: usize,
    pub heldout_per_class: usize,
    /// Extra pretraining clips per class recorded under a random condition
    /// and paired with a prompt whose prefix names that condition.
    pub captioned_per_class: usize,
    /// SNR range of the noisy condition.
    pub caption_snr_db: [f64; 2],
    /// Tilt range of the muffled condition.
    pub caption_tilt_db: [f64; 2],
    pub dims: ModelDims,
    pub tau: f64,
    pub mel: MelConfig,
    pub pretrain: PretrainConfig,
}

impl Default for ToySetup {
    fn default() -> Self {
        Self {
            data: SyntheticDatasetSpec::default(),
            pretrain_per_class: 60,
            heldout_per_class: 20,
            captioned_per_class: 0,
            caption_snr_db: [0.0, 15.0],
            caption_tilt_db: [-6.0, -1.0],
            dims: ModelDims::default(),
            tau: 0.07,
            mel: MelConfig::default(),
            pretrain: PretrainConfig::default(),
        }
    }
}

/// A random recording condition: noise, a downward tilt, or both.
fn caption_condition(setup: &ToySetup, rng: &mut impl Rng) -> DomainShiftSpec {
    let [lo, hi] = setup.caption_snr_db;
    let noise = DomainShiftSpec::AdditiveNoise { snr_db: rng.gen_range(lo..=hi) };
    let [lo, hi] = setup.caption_tilt_db;
    let tilt = DomainShiftSpec::SpectralTilt { db_per_octave: rng.gen_range(lo..=hi) };
    match rng.gen_range(0..3) {
        0 => noise,
        1 => tilt,
        _ => DomainShiftSpec::Combined { shifts: vec![noise, tilt] },
    }
}

/// Generates the pretraining and held-out splits and pretrains a model.
/// Held-out clips are clean; pretraining clips are clean or captioned.
pub fn build_model(setup: &ToySetup, seed_value: u64) -> Result<(ToyModel, PretrainReport)> {
    let n = setup.data.n_classes;
    if setup.dims.vocab < PROMPT_PREFIX.len() + n + DOMAIN_WORDS {
        return Err(Error::Config(format!("vocabulary of {} cannot hold {} classes", setup.dims.vocab, n)));
    }
    let data_spec = SyntheticDatasetSpec { seed: seed::derive(seed_value, "dataset", 0), ..setup.data };
    let frontend = MelFrontend::new(setup.mel, data_spec.sample_rate)?;
    let per_class = setup.pretrain_per_class + setup.captioned_per_class;
    let pretrain = gen_dataset(&SyntheticDatasetSpec { samples_per_class: per_class, ..data_spec }, Split::Pretrain)?;
    let train = pretrain
        .clips
        .par_iter()
        .zip(&pretrain.labels)
        .enumerate()
        .map(|(i, (w, &label))| {
            if i % per_class < setup.pretrain_per_class {
                return Ok(LabeledClip { mel: frontend.compute(w)?, label, caption: Vec::new() });
            }
            let mut rng = seed::rng(seed_value, "caption-condition", i as u64);
            let cond = caption_condition(setup, &mut rng);
            let shifted = shift_waveform(w, &cond, &mut rng);
            Ok(LabeledClip { mel: frontend.compute(&shifted)?, label, caption: domain_words(&cond, setup.dims.vocab) })
        })
        .collect::<Result<Vec<_>>>()?;
    let heldout =
        gen_dataset(&SyntheticDatasetSpec { samples_per_class: setup.heldout_per_class, ..data_spec }, Split::Heldout)?;
    let heldout = heldout
        .clips
        .par_iter()
        .zip(&heldout.labels)
        .map(|(w, &label)| Ok(LabeledClip { mel: frontend.compute(w)?, label, caption: Vec::new() }))
        .collect::<Result<Vec<_>>>()?;
    let data = PretrainData { train, heldout, class_prompts: class_prompts(n) };
    let mut model =
        ToyModel::init(setup.dims, setup.tau, setup.mel, data_spec.sample_rate, seed::derive(seed_value, "model", 0));
    let cfg = PretrainConfig { seed: seed::derive(seed_value, "pretrain", 0), ..setup.pretrain };
    let report = pretrain_toy(&mut model, &data, &cfg)?;
    Ok((model, report))
}

/// The test split of the setup's synthetic task (same class signatures as
/// pretraining).
pub fn test_dataset(setup: &ToySetup, seed_value: u64) -> Result<Dataset> {
    let spec = SyntheticDatasetSpec { seed: seed::derive(seed_value, "dataset", 0), ..setup.data };
    gen_dataset(&spec, Split::Test)
}

/// The end-to-end protocol, once per seed: pretrain a model, draw the test
/// split, shift it and adapt on it. Every stream is derived from the seed.
pub fn seeded_shift_runs(
    setup: &ToySetup,
    exp: &ExperimentConfig,
    shift: &DomainShiftSpec,
    seeds: &[u64],
) -> Result<Vec<RunReport>> {
    seeds
        .iter()
        .map(|&s| {
            let (model, _) = build_model(setup, s)?;
            let shifted = apply_shift(&test_dataset(setup, s)?, shift, seed::derive(s, "shift", 0))?;
            let set = prepare(&model, &shifted, exp, s)?;
            evaluate_tta(&model, &set, exp, s, &shift.to_string()).map(|r| r.0)
        })
        .collect()
}
