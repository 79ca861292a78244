//! Flat key-value configuration. Every key is optional in the file; missing
//! keys take their defaults, command-line flags win over both, and the merged
//! result is validated before any work starts.

use std::fs;
use std::path::{Path, PathBuf};

use mcgtta_core::harness::{DomainShiftSpec, ExperimentConfig, SyntheticDatasetSpec, ToySetup};
use mcgtta_core::model::{sha256_hex, ModelDims, PretrainConfig};
use mcgtta_core::tta::{Ablation, AdamWParams};
use mcgtta_core::{AdaptConfig, Conditioning, MelConfig, Mode, NetConfig};
use serde::{Deserialize, Serialize};

use crate::exit::CliError;

/// Keys excluded from the config hash: they name files or only affect speed,
/// and the seed, so rows from different seeds group under one hash.
const UNHASHED: [&str; 6] = ["seed", "model", "dataset", "out", "jobs", "model_hash"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: u64,

    // synthetic data
    pub n_classes: usize,
    pub test_per_class: usize,
    pub clip_seconds: f64,
    pub sample_rate: u32,
    pub base_snr_db: f64,
    pub f_low: f64,
    pub f_high: f64,
    pub freq_jitter: f64,
    pub shift: String,
    pub shifts: Vec<String>,

    // pretraining and model shape
    pub pretrain_per_class: usize,
    pub heldout_per_class: usize,
    pub captioned_per_class: usize,
    pub max_epochs: usize,
    pub min_epochs: usize,
    pub pretrain_lr: f64,
    pub pretrain_weight_decay: f64,
    pub target_accuracy: f64,
    pub prefix_pad: usize,
    pub prefix_pad_prob: f64,
    pub embed_dim: usize,
    pub token_dim: usize,
    pub hidden_dim: usize,
    pub vocab: usize,
    pub max_len: usize,
    pub tau: f64,

    // log-mel frontend
    pub n_mels: usize,
    pub hop: usize,
    pub window: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,

    // views
    pub n_views: usize,
    pub max_time_mask: usize,
    pub max_freq_mask: usize,

    // adaptation
    pub lr: f64,
    pub steps_per_batch: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub mode: Mode,
    pub conditioning: Conditioning,
    pub disable_cnet: bool,
    pub disable_dnet: bool,
    pub disable_contrastive: bool,
    pub disable_entropy: bool,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub net_depth: usize,
    pub width_mult: usize,
    pub domain_tokens: usize,

    // artifacts
    pub model: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Expected SHA-256 of the model checkpoint, checked on load when set.
    pub model_hash: Option<String>,
    pub jobs: Option<usize>,
}

impl Default for Config {
    fn default() -> Self {
        let setup = ToySetup::default();
        let exp = ExperimentConfig::default();
        let data = setup.data;
        let (mel, dims, pre, a) = (setup.mel, setup.dims, setup.pretrain, exp.adapt);
        Self {
            seed: 0,
            n_classes: data.n_classes,
            test_per_class: data.samples_per_class,
            clip_seconds: data.clip_seconds,
            sample_rate: data.sample_rate,
            base_snr_db: data.base_snr_db,
            f_low: data.f_low,
            f_high: data.f_high,
            freq_jitter: data.freq_jitter,
            shift: "noise:5+tilt:-3".into(),
            shifts: vec!["noise:5".into(), "tilt:-3".into(), "noise:5+tilt:-3".into()],
            pretrain_per_class: setup.pretrain_per_class,
            heldout_per_class: setup.heldout_per_class,
            captioned_per_class: setup.captioned_per_class,
            max_epochs: pre.max_epochs,
            min_epochs: pre.min_epochs,
            pretrain_lr: pre.lr,
            pretrain_weight_decay: pre.weight_decay,
            target_accuracy: pre.target_accuracy,
            prefix_pad: pre.prefix_pad,
            prefix_pad_prob: pre.prefix_pad_prob,
            embed_dim: dims.embed,
            token_dim: dims.token,
            hidden_dim: dims.hidden,
            vocab: dims.vocab,
            max_len: dims.max_len,
            tau: setup.tau,
            n_mels: mel.n_mels,
            hop: mel.hop,
            window: mel.window,
            f_min: mel.f_min,
            f_max: mel.f_max,
            log_floor: mel.log_floor,
            n_views: exp.n_views,
            max_time_mask: exp.max_time_mask,
            max_freq_mask: exp.max_freq_mask,
            lr: a.lr,
            steps_per_batch: a.steps_per_batch,
            batch_size: a.batch_size,
            lambda: a.lambda,
            mode: a.mode,
            conditioning: a.conditioning,
            disable_cnet: a.ablation.disable_cnet,
            disable_dnet: a.ablation.disable_dnet,
            disable_contrastive: a.ablation.disable_contrastive,
            disable_entropy: a.ablation.disable_entropy,
            weight_decay: a.adamw.weight_decay,
            beta1: a.adamw.beta1,
            beta2: a.adamw.beta2,
            eps: a.adamw.eps,
            net_depth: exp.net.depth,
            width_mult: exp.net.width_mult,
            domain_tokens: exp.net.domain_tokens,
            model: None,
            dataset: None,
            out: None,
            model_hash: None,
            jobs: None,
        }
    }
}

impl Config {
    /// Defaults overlaid with the file at `path`, if any, then with
    /// `overrides`, which win.
    pub fn resolve(path: Option<&Path>, overrides: toml::Table) -> Result<Self, CliError> {
        let mut table = match path {
            None => toml::Table::new(),
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
                text.parse().map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?
            }
        };
        table.extend(overrides);
        let cfg = Self::from_table(table).map_err(|e| match path {
            Some(p) => CliError::config(format!("config {}: {}", p.display(), e.message)),
            None => e,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_table(table: toml::Table) -> Result<Self, CliError> {
        let mut merged = toml::Table::try_from(Self::default()).map_err(|e| CliError::internal(e.to_string()))?;
        for (k, v) in table {
            if !merged.contains_key(&k) && !Self::optional_keys().contains(&k.as_str()) {
                return Err(CliError::config(format!("unknown key {k:?}")));
            }
            merged.insert(k, v);
        }
        merged.try_into().map_err(|e: toml::de::Error| CliError::config(e.message().to_string()))
    }

    /// Keys whose default is absent and so do not appear in the defaults table.
    fn optional_keys() -> [&'static str; 5] {
        ["model", "dataset", "out", "model_hash", "jobs"]
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.setup().data.validate()?;
        self.mel().validate(self.sample_rate)?;
        self.experiment().validate()?;
        let frames = self.mel().frame_count(self.setup().data.clip_len());
        if self.n_views > 1 && (self.max_time_mask >= frames || self.max_freq_mask >= self.n_mels) {
            return Err(CliError::config(format!(
                "masks of {} frames and {} bins do not fit a {frames} x {} spectrogram",
                self.max_time_mask, self.max_freq_mask, self.n_mels
            )));
        }
        self.shift_spec()?;
        for s in &self.shifts {
            parse_shift(s)?;
        }
        let p = self.setup().pretrain;
        if p.min_epochs > p.max_epochs {
            return Err(CliError::config(format!("min_epochs {} exceeds max_epochs {}", p.min_epochs, p.max_epochs)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(CliError::config(format!("tau {} must be positive", self.tau)));
        }
        if self.jobs == Some(0) {
            return Err(CliError::config("jobs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn mel(&self) -> MelConfig {
        MelConfig {
            n_mels: self.n_mels,
            hop: self.hop,
            window: self.window,
            f_min: self.f_min,
            f_max: self.f_max,
            log_floor: self.log_floor,
        }
    }

    pub fn setup(&self) -> ToySetup {
        ToySetup {
            data: SyntheticDatasetSpec {
                n_classes: self.n_classes,
                samples_per_class: self.test_per_class,
                clip_seconds: self.clip_seconds,
                sample_rate: self.sample_rate,
                base_snr_db: self.base_snr_db,
                f_low: self.f_low,
                f_high: self.f_high,
                freq_jitter: self.freq_jitter,
                seed: 0,
            },
            pretrain_per_class: self.pretrain_per_class,
            heldout_per_class: self.heldout_per_class,
            captioned_per_class: self.captioned_per_class,
            caption_snr_db: ToySetup::default().caption_snr_db,
            caption_tilt_db: ToySetup::default().caption_tilt_db,
            dims: ModelDims {
                embed: self.embed_dim,
                token: self.token_dim,
                hidden: self.hidden_dim,
                vocab: self.vocab,
                max_len: self.max_len,
                n_mels: self.n_mels,
            },
            tau: self.tau,
            mel: self.mel(),
            pretrain: PretrainConfig {
                max_epochs: self.max_epochs,
                min_epochs: self.min_epochs,
                lr: self.pretrain_lr,
                weight_decay: self.pretrain_weight_decay,
                target_accuracy: self.target_accuracy,
                prefix_pad: self.prefix_pad,
                prefix_pad_prob: self.prefix_pad_prob,
                seed: 0,
            },
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            adapt: AdaptConfig {
                lr: self.lr,
                steps_per_batch: self.steps_per_batch,
                batch_size: self.batch_size,
                lambda: self.lambda,
                mode: self.mode,
                ablation: Ablation {
                    disable_cnet: self.disable_cnet,
                    disable_dnet: self.disable_dnet,
                    disable_contrastive: self.disable_contrastive,
                    disable_entropy: self.disable_entropy,
                },
                conditioning: self.conditioning,
                adamw: AdamWParams {
                    beta1: self.beta1,
                    beta2: self.beta2,
                    eps: self.eps,
                    weight_decay: self.weight_decay,
                },
            },
            net: NetConfig { depth: self.net_depth, width_mult: self.width_mult, domain_tokens: self.domain_tokens },
            n_views: self.n_views,
            max_time_mask: self.max_time_mask,
            max_freq_mask: self.max_freq_mask,
        }
    }

    /// Copies an experiment's adaptation and network settings back in.
    pub fn with_experiment(&self, e: &ExperimentConfig) -> Self {
        let a = &e.adapt;
        Self {
            lr: a.lr,
            steps_per_batch: a.steps_per_batch,
            batch_size: a.batch_size,
            lambda: a.lambda,
            mode: a.mode,
            conditioning: a.conditioning,
            disable_cnet: a.ablation.disable_cnet,
            disable_dnet: a.ablation.disable_dnet,
            disable_contrastive: a.ablation.disable_contrastive,
            disable_entropy: a.ablation.disable_entropy,
            weight_decay: a.adamw.weight_decay,
            beta1: a.adamw.beta1,
            beta2: a.adamw.beta2,
            eps: a.adamw.eps,
            net_depth: e.net.depth,
            width_mult: e.net.width_mult,
            domain_tokens: e.net.domain_tokens,
            n_views: e.n_views,
            max_time_mask: e.max_time_mask,
            max_freq_mask: e.max_freq_mask,
            ..self.clone()
        }
    }

    pub fn shift_spec(&self) -> Result<DomainShiftSpec, CliError> {
        parse_shift(&self.shift)
    }

    pub fn shift_specs(&self) -> Result<Vec<DomainShiftSpec>, CliError> {
        self.shifts.iter().map(|s| parse_shift(s)).collect()
    }

    /// The effective configuration as JSON.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// SHA-256 of the echoed configuration minus file paths, job count and
    /// seed.
    pub fn hash(&self) -> String {
        hash_echo(&self.echo())
    }
}

/// Hash of an echoed configuration; lets a reader re-derive a row's hash.
pub fn hash_echo(echo: &serde_json::Value) -> String {
    let mut v = echo.clone();
    if let Some(map) = v.as_object_mut() {
        for k in UNHASHED {
            map.remove(k);
        }
    }
    // serde_json maps are ordered by key, so this encoding is canonical
    sha256_hex(serde_json::to_string(&v).expect("json value serializes").as_bytes())
}

fn parse_shift(s: &str) -> Result<DomainShiftSpec, CliError> {
    s.parse().map_err(CliError::from)
}
