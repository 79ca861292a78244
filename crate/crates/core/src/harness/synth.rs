//! Synthetic classes (two tones plus amplitude modulation per class) and
//! waveform-domain shifts.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::seed;

/// Shared template tokens preceding the class token, i.e. "this is a sound of".
pub const PROMPT_PREFIX: [usize; 4] = [0, 1, 2, 3];

/// Token ids of each class prompt: the shared prefix plus one class token.
pub fn class_prompts(n_classes: usize) -> Vec<Vec<usize>> {
    (0..n_classes)
        .map(|c| PROMPT_PREFIX.iter().copied().chain(std::iter::once(PROMPT_PREFIX.len() + c)).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDatasetSpec {
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub clip_seconds: f64,
    pub sample_rate: u32,
    /// Background noise relative to the class signal.
    pub base_snr_db: f64,
    /// Lowest and highest tone frequency.
    pub f_low: f64,
    pub f_high: f64,
    /// Relative per-clip jitter of tone frequencies.
    pub freq_jitter: f64,
    pub seed: u64,
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        Self {
            n_classes: 8,
            samples_per_class: 40,
            clip_seconds: 1.0,
            sample_rate: 44_100,
            base_snr_db: 20.0,
            f_low: 150.0,
            f_high: 6000.0,
            freq_jitter: 0.2,
            seed: 0,
        }
    }
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.samples_per_class == 0 || !(self.clip_seconds > 0.0) {
            return Err(Error::Config("empty dataset".into()));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.f_low > 0.0 && self.f_low < self.f_high && self.f_high * (1.0 + self.freq_jitter) < nyquist) {
            return Err(Error::Config(format!(
                "tone range {}..{} Hz invalid for {} Hz",
                self.f_low, self.f_high, self.sample_rate
            )));
        }
        Ok(())
    }

    pub fn clip_len(&self) -> usize {
        (self.clip_seconds * self.sample_rate as f64).round() as usize
    }
}

/// The two tones and modulation rate that define a class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSignature {
    pub tones: [f64; 2],
    pub am_rate: f64,
}

/// Pairwise-distinct signatures: tones drawn without replacement from a
/// log-spaced grid, modulation rates from a shuffled linear grid.
pub fn class_signatures(spec: &SyntheticDatasetSpec) -> Vec<ClassSignature> {
    let n = spec.n_classes;
    let mut rng = seed::rng(spec.seed, "class-signatures", 0);
    let grid: Vec<f64> =
        (0..2 * n).map(|i| spec.f_low * (spec.f_high / spec.f_low).powf(i as f64 / (2 * n - 1) as f64)).collect();
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.shuffle(&mut rng);
    let mut rates: Vec<f64> = (0..n).map(|i| 2.0 + 14.0 * i as f64 / (n - 1).max(1) as f64).collect();
    rates.shuffle(&mut rng);
    (0..n)
        .map(|c| {
            let (a, b) = (grid[order[2 * c]], grid[order[2 * c + 1]]);
            ClassSignature { tones: [a.min(b), a.max(b)], am_rate: rates[c] }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Pretrain,
    Heldout,
    Test,
}

impl Split {
    fn tag(self) -> &'static str {
        match self {
            Split::Pretrain => "clips-pretrain",
            Split::Heldout => "clips-heldout",
            Split::Test => "clips-test",
        }
    }
}

/// Labeled waveforms plus the class prompts that name them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub clips: Vec<Waveform>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn class_prompts(&self) -> Vec<Vec<usize>> {
        class_prompts(self.n_classes)
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

fn synth_clip(spec: &SyntheticDatasetSpec, sig: &ClassSignature, rng: &mut impl Rng) -> Vec<f64> {
    let sr = spec.sample_rate as f64;
    let n = spec.clip_len();
    let tau = 2.0 * std::f64::consts::PI;
    let f: Vec<f64> =
        sig.tones.iter().map(|t| t * (1.0 + rng.gen_range(-spec.freq_jitter..=spec.freq_jitter))).collect();
    let amp = [rng.gen_range(0.5..1.0), rng.gen_range(0.5..1.0)];
    let phase: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..tau)).collect();
    let rate = sig.am_rate * (1.0 + rng.gen_range(-0.1..=0.1));
    let depth = rng.gen_range(0.6..0.9);
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let env = 1.0 + depth * (tau * rate * t + phase[2]).sin();
            env * (amp[0] * (tau * f[0] * t + phase[0]).sin() + amp[1] * (tau * f[1] * t + phase[1]).sin())
        })
        .collect();
    let noise_std = (power(&x) / 10f64.powf(spec.base_snr_db / 10.0)).sqrt();
    for v in &mut x {
        let z: f64 = StandardNormal.sample(rng);
        *v += noise_std * z;
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = rng.gen_range(0.2..0.35) / peak.max(1e-12);
    x.iter_mut().for_each(|v| *v *= gain);
    x
}

/// Deterministic labeled clips, `samples_per_class` per class, ordered by
/// class then index. Class signatures depend only on `spec.seed`; the clip
/// randomness additionally depends on the split.
pub fn gen_dataset(spec: &SyntheticDatasetSpec, split: Split) -> Result<Dataset> {
    spec.validate()?;
    let sigs = class_signatures(spec);
    let mut clips = Vec::with_capacity(spec.n_classes * spec.samples_per_class);
    let mut labels = Vec::with_capacity(clips.capacity());
    for (c, sig) in sigs.iter().enumerate() {
        for k in 0..spec.samples_per_class {
            let mut rng = seed::rng(spec.seed, split.tag(), (c * spec.samples_per_class + k) as u64);
            let x = synth_clip(spec, sig, &mut rng);
            clips.push(Waveform::new(x.into_iter().map(|v| v as f32).collect(), spec.sample_rate));
            labels.push(c);
        }
    }
    Ok(Dataset { clips, labels, n_classes: spec.n_classes })
}

/// Waveform-domain corruption applied to test clips only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainShiftSpec {
    /// White Gaussian noise at the given SNR relative to each clip's power.
    AdditiveNoise {
        snr_db: f64,
    },
    /// Spectral slope in dB per octave around 1 kHz.
    SpectralTilt {
        db_per_octave: f64,
    },
    Gain {
        db: f64,
    },
    Combined {
        shifts: Vec<DomainShiftSpec>,
    },
}

impl DomainShiftSpec {
    pub fn none() -> Self {
        DomainShiftSpec::Combined { shifts: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            DomainShiftSpec::AdditiveNoise { snr_db } => snr_db.is_finite(),
            DomainShiftSpec::SpectralTilt { db_per_octave } => db_per_octave.is_finite(),
            DomainShiftSpec::Gain { db } => db.is_finite(),
            DomainShiftSpec::Combined { shifts } => return shifts.iter().try_for_each(Self::validate),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("non-finite shift parameter in {self}")))
        }
    }
}

impl fmt::Display for DomainShiftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainShiftSpec::AdditiveNoise { snr_db } => write!(f, "noise:{snr_db}"),
            DomainShiftSpec::SpectralTilt { db_per_octave } => write!(f, "tilt:{db_per_octave}"),
            DomainShiftSpec::Gain { db } => write!(f, "gain:{db}"),
            DomainShiftSpec::Combined { shifts } if shifts.is_empty() => write!(f, "none"),
            DomainShiftSpec::Combined { shifts } => {
                let parts: Vec<String> = shifts.iter().map(ToString::to_string).collect();
                write!(f, "{}", parts.join("+"))
            }
        }
    }
}

/// Parses `none`, `noise:<snr dB>`, `tilt:<dB/oct>`, `gain:<dB>` and
/// `+`-joined combinations such as `noise:5+tilt:-3`.
impl FromStr for DomainShiftSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(Self::none());
        }
        if s.contains('+') {
            let shifts = s.split('+').map(str::parse).collect::<Result<Vec<_>>>()?;
            return Ok(DomainShiftSpec::Combined { shifts });
        }
        let (kind, value) = s.split_once(':').ok_or_else(|| Error::Config(format!("shift {s:?} lacks ':<value>'")))?;
        let v: f64 = value.trim().parse().map_err(|_| Error::Config(format!("bad shift value in {s:?}")))?;
        let shift = match kind.trim() {
            "noise" => DomainShiftSpec::AdditiveNoise { snr_db: v },
            "tilt" => DomainShiftSpec::SpectralTilt { db_per_octave: v },
            "gain" => DomainShiftSpec::Gain { db: v },
            other => return Err(Error::Config(format!("unknown shift kind {other:?}"))),
        };
        shift.validate()?;
        Ok(shift)
    }
}

fn tilt(x: &mut [f64], sample_rate: u32, db_per_octave: f64) {
    let n = x.len();
    if n < 2 {
        return;
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let bin_hz = sample_rate as f64 / n as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        // symmetric in k so the signal stays real
        let freq = k.min(n - k).max(1) as f64 * bin_hz;
        *c *= 10f64.powf(db_per_octave * (freq / 1000.0).log2() / 20.0);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    for (v, c) in x.iter_mut().zip(&buf) {
        *v = c.re / n as f64;
    }
}

fn apply_one(x: &mut [f64], sample_rate: u32, shift: &DomainShiftSpec, rng: &mut impl Rng) {
    match shift {
        DomainShiftSpec::AdditiveNoise { snr_db } => {
            let std = (power(x) / 10f64.powf(snr_db / 10.0)).sqrt();
            for v in x.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v += std * z;
            }
        }
        DomainShiftSpec::SpectralTilt { db_per_octave } => tilt(x, sample_rate, *db_per_octave),
        DomainShiftSpec::Gain { db } => {
            let g = 10f64.powf(db / 20.0);
            x.iter_mut().for_each(|v| *v *= g);
        }
        DomainShiftSpec::Combined { shifts } => {
            for s in shifts {
                apply_one(x, sample_rate, s, rng);
            }
        }
    }
}

/// One shifted copy of `w`, clamped to `[-1, 1]`.
pub fn shift_waveform(w: &Waveform, shift: &DomainShiftSpec, rng: &mut impl Rng) -> Waveform {
    let mut x: Vec<f64> = w.samples.iter().map(|&v| v as f64).collect();
    apply_one(&mut x, w.sample_rate, shift, rng);
    Waveform::new(x.into_iter().map(|v| v.clamp(-1.0, 1.0) as f32).collect(), w.sample_rate)
}

/// Applies `shift` to every clip; labels are untouched. Samples are clamped
/// to `[-1, 1]`. A zero-dB gain (or `none`) returns identical waveforms.
pub fn apply_shift(data: &Dataset, shift: &DomainShiftSpec, seed_value: u64) -> Result<Dataset> {
    shift.validate()?;
    let clips = data
        .clips
        .iter()
        .enumerate()
        .map(|(i, w)| shift_waveform(w, shift, &mut seed::rng(seed_value, "domain-shift", i as u64)))
        .collect();
    Ok(Dataset { clips, labels: data.labels.clone(), n_classes: data.n_classes })
}

/// Caption words for a recording condition, one per component, taken from
/// the top of the vocabulary: `noisy`, `muffled` (negative tilt) or `bright`,
/// `quiet` (negative gain) or `loud`.
pub fn domain_words(shift: &DomainShiftSpec, vocab: usize) -> Vec<usize> {
    match shift {
        DomainShiftSpec::AdditiveNoise { .. } => vec![vocab - 1],
        DomainShiftSpec::SpectralTilt { db_per_octave } if *db_per_octave < 0.0 => vec![vocab - 2],
        DomainShiftSpec::SpectralTilt { .. } => vec![vocab - 3],
        DomainShiftSpec::Gain { db } if *db < 0.0 => vec![vocab - 4],
        DomainShiftSpec::Gain { .. } => vec![vocab - 5],
        DomainShiftSpec::Combined { shifts } => shifts.iter().flat_map(|s| domain_words(s, vocab)).collect(),
    }
}

/// Number of vocabulary rows reserved for [`domain_words`].
pub const DOMAIN_WORDS: usize = 5;
