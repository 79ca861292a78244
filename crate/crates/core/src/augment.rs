//! SpecAugment-style view generation: time masking, frequency masking, both,
//! and time reordering (swap the two temporal halves).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AugmentOp {
    #[serde(rename = "ID")]
    Identity,
    #[serde(rename = "TM")]
    TimeMask,
    #[serde(rename = "FM")]
    FreqMask,
    #[serde(rename = "TFM")]
    TimeFreqMask,
    #[serde(rename = "TR")]
    TimeReorder,
}

impl AugmentOp {
    pub fn tag(self) -> &'static str {
        match self {
            AugmentOp::Identity => "ID",
            AugmentOp::TimeMask => "TM",
            AugmentOp::FreqMask => "FM",
            AugmentOp::TimeFreqMask => "TFM",
            AugmentOp::TimeReorder => "TR",
        }
    }
}

/// Operator applied to one view plus the mask windows it drew.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewProvenance {
    pub op: AugmentOp,
    /// `(start, width)` along time.
    pub time: Option<(usize, usize)>,
    /// `(start, width)` along frequency.
    pub freq: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub n_views: usize,
    pub max_time_mask: usize,
    pub max_freq_mask: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { n_views: 8, max_time_mask: 20, max_freq_mask: 6, seed: 0 }
    }
}

impl AugmentConfig {
    pub fn validate(&self, x: &MelSpectrogram) -> Result<()> {
        if self.n_views == 0 {
            return Err(Error::Config("n_views must be at least 1".into()));
        }
        if self.n_views > 1 {
            if self.max_time_mask == 0 || self.max_time_mask >= x.frames() {
                return Err(Error::Config(format!(
                    "max_time_mask {} must be in 1..{}",
                    self.max_time_mask,
                    x.frames()
                )));
            }
            if self.max_freq_mask == 0 || self.max_freq_mask >= x.bins() {
                return Err(Error::Config(format!("max_freq_mask {} must be in 1..{}", self.max_freq_mask, x.bins())));
            }
        }
        Ok(())
    }
}

/// `M` views of one spectrogram; view 0 is always the input itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet {
    pub views: Vec<MelSpectrogram>,
    pub provenance: Vec<ViewProvenance>,
}

impl ViewSet {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn tags(&self) -> Vec<&'static str> {
        self.provenance.iter().map(|p| p.op.tag()).collect()
    }
}

fn check_range(start: usize, width: usize, len: usize) -> Result<()> {
    if start.checked_add(width).map_or(true, |end| end > len) {
        return Err(Error::MaskRange { start, end: start.saturating_add(width), len });
    }
    Ok(())
}

fn fill_rows(x: &mut MelSpectrogram, start: usize, width: usize, value: f64) {
    let bins = x.bins();
    for v in &mut x.data_mut()[start * bins..(start + width) * bins] {
        *v = value;
    }
}

fn fill_cols(x: &mut MelSpectrogram, start: usize, width: usize, value: f64) {
    let bins = x.bins();
    for row in x.data_mut().chunks_exact_mut(bins) {
        for v in &mut row[start..start + width] {
            *v = value;
        }
    }
}

/// Replaces frames `[start, start + width)` with the spectrogram's mean.
pub fn time_mask(x: &MelSpectrogram, start: usize, width: usize) -> Result<MelSpectrogram> {
    check_range(start, width, x.frames())?;
    let mut out = x.clone();
    fill_rows(&mut out, start, width, x.mean());
    Ok(out)
}

/// Replaces mel bins `[start, start + width)` with the spectrogram's mean.
pub fn freq_mask(x: &MelSpectrogram, start: usize, width: usize) -> Result<MelSpectrogram> {
    check_range(start, width, x.bins())?;
    let mut out = x.clone();
    fill_cols(&mut out, start, width, x.mean());
    Ok(out)
}

/// Both masks, each filled with the mean of the original input.
pub fn time_freq_mask(
    x: &MelSpectrogram,
    t_start: usize,
    t_width: usize,
    f_start: usize,
    f_width: usize,
) -> Result<MelSpectrogram> {
    check_range(t_start, t_width, x.frames())?;
    check_range(f_start, f_width, x.bins())?;
    let mean = x.mean();
    let mut out = x.clone();
    fill_rows(&mut out, t_start, t_width, mean);
    fill_cols(&mut out, f_start, f_width, mean);
    Ok(out)
}

/// Rows `[k, T)` followed by rows `[0, k)` with `k = T / 2`.
pub fn time_reorder(x: &MelSpectrogram) -> Result<MelSpectrogram> {
    let frames = x.frames();
    if frames < 2 {
        return Err(Error::InputTooShort(format!("time reorder needs 2 frames, got {frames}")));
    }
    let split = (frames / 2) * x.bins();
    let mut data = Vec::with_capacity(x.data().len());
    data.extend_from_slice(&x.data()[split..]);
    data.extend_from_slice(&x.data()[..split]);
    MelSpectrogram::new(frames, x.bins(), data)
}

fn draw_window(rng: &mut impl Rng, max_width: usize, len: usize) -> (usize, usize) {
    let width = rng.gen_range(1..=max_width.min(len));
    let start = rng.gen_range(0..=len - width);
    (start, width)
}

/// Operator for view `i` (`i ≥ 1`): cycles TM, FM, TFM, TR.
pub fn op_for_view(i: usize) -> AugmentOp {
    match i {
        0 => AugmentOp::Identity,
        _ => [AugmentOp::TimeMask, AugmentOp::FreqMask, AugmentOp::TimeFreqMask, AugmentOp::TimeReorder][(i - 1) % 4],
    }
}

fn make_view(x: &MelSpectrogram, cfg: &AugmentConfig, i: usize) -> Result<(MelSpectrogram, ViewProvenance)> {
    let op = op_for_view(i);
    let mut rng = seed::rng(cfg.seed, "augment-view", i as u64);
    let (frames, bins) = (x.frames(), x.bins());
    Ok(match op {
        AugmentOp::Identity => (x.clone(), ViewProvenance { op, time: None, freq: None }),
        AugmentOp::TimeMask => {
            let (s, w) = draw_window(&mut rng, cfg.max_time_mask, frames);
            (time_mask(x, s, w)?, ViewProvenance { op, time: Some((s, w)), freq: None })
        }
        AugmentOp::FreqMask => {
            let (s, w) = draw_window(&mut rng, cfg.max_freq_mask, bins);
            (freq_mask(x, s, w)?, ViewProvenance { op, time: None, freq: Some((s, w)) })
        }
        AugmentOp::TimeFreqMask => {
            let t = draw_window(&mut rng, cfg.max_time_mask, frames);
            let f = draw_window(&mut rng, cfg.max_freq_mask, bins);
            (time_freq_mask(x, t.0, t.1, f.0, f.1)?, ViewProvenance { op, time: Some(t), freq: Some(f) })
        }
        AugmentOp::TimeReorder => (time_reorder(x)?, ViewProvenance { op, time: None, freq: None }),
    })
}

/// Builds `cfg.n_views` views of `x`. Each view's randomness is keyed by
/// `(cfg.seed, view index)`, so views can be produced in any order.
pub fn make_views(x: &MelSpectrogram, cfg: &AugmentConfig) -> Result<ViewSet> {
    cfg.validate(x)?;
    let (views, provenance) =
        (0..cfg.n_views).map(|i| make_view(x, cfg, i)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok(ViewSet { views, provenance })
}
