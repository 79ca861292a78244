use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mono audio clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Log-mel feature configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub n_mels: usize,
    pub hop: usize,
    pub window: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self { n_mels: 64, hop: 320, window: 1024, f_min: 50.0, f_max: 8000.0, log_floor: 1e-10 }
    }
}

impl MelConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if self.n_mels < 2 {
            return Err(Error::Config(format!("n_mels = {} (need >= 2)", self.n_mels)));
        }
        if self.hop == 0 || self.hop > self.window {
            return Err(Error::Config(format!("hop = {} must be in 1..={}", self.hop, self.window)));
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max) {
            return Err(Error::Config(format!("f_min {} must be below f_max {}", self.f_min, self.f_max)));
        }
        if self.f_max > nyquist {
            return Err(Error::Config(format!("f_max {} exceeds Nyquist {}", self.f_max, nyquist)));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Config("log_floor must be positive".into()));
        }
        Ok(())
    }

    /// Number of frames produced for a clip of `len` samples (no padding).
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window {
            0
        } else {
            (len - self.window) / self.hop + 1
        }
    }
}

/// `T × F` log-mel matrix stored row-major (one row per frame).
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    frames: usize,
    bins: usize,
    data: Vec<f64>,
}

impl MelSpectrogram {
    pub fn new(frames: usize, bins: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * bins {
            return Err(Error::Shape(format!("{} values for a {frames}x{bins} spectrogram", data.len())));
        }
        Ok(Self { frames, bins, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let bins = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != bins) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), bins, rows.concat())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn get(&self, t: usize, f: usize) -> f64 {
        self.data[t * self.bins + f]
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Precomputed window, FFT plan and filterbank for one `(MelConfig, sample_rate)`.
pub struct MelFrontend {
    cfg: MelConfig,
    window: Vec<f64>,
    /// `n_mels` rows of `(first_bin, weights)`.
    filters: Vec<(usize, Vec<f64>)>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for MelFrontend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MelFrontend").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl MelFrontend {
    pub fn new(cfg: MelConfig, sample_rate: u32) -> Result<Self> {
        cfg.validate(sample_rate)?;
        let n = cfg.window;
        // periodic Hann
        let window = (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect();
        let fft = FftPlanner::new().plan_fft_forward(n);
        let filters = Self::filterbank(&cfg, sample_rate);
        Ok(Self { cfg, window, filters, fft })
    }

    pub fn config(&self) -> &MelConfig {
        &self.cfg
    }

    /// Triangular HTK-scale filters over the one-sided FFT bins.
    fn filterbank(cfg: &MelConfig, sample_rate: u32) -> Vec<(usize, Vec<f64>)> {
        let n_freqs = cfg.window / 2 + 1;
        let bin_hz = sample_rate as f64 / cfg.window as f64;
        let (m_lo, m_hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
        let edges: Vec<f64> =
            (0..cfg.n_mels + 2).map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (cfg.n_mels + 1) as f64)).collect();
        (0..cfg.n_mels)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let weights: Vec<(usize, f64)> = (0..n_freqs)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > lo && f <= mid {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f < hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                match weights.first() {
                    Some(&(first, _)) => {
                        let last = weights.last().map_or(first, |w| w.0);
                        let mut dense = vec![0.0; last - first + 1];
                        for (k, w) in weights {
                            dense[k - first] = w;
                        }
                        (first, dense)
                    }
                    // narrower than one FFT bin; contributes nothing
                    None => (0, Vec::new()),
                }
            })
            .collect()
    }

    /// Mel filterbank energies before log compression (`T × n_mels`).
    pub fn power_mel(&self, w: &Waveform) -> Result<MelSpectrogram> {
        let cfg = &self.cfg;
        if w.len() < cfg.window {
            return Err(Error::InputTooShort(format!("{} samples, window needs {}", w.len(), cfg.window)));
        }
        let frames = cfg.frame_count(w.len());
        let n_freqs = cfg.window / 2 + 1;
        let mut out = Vec::with_capacity(frames * cfg.n_mels);
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.window];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; n_freqs];
        for t in 0..frames {
            let start = t * cfg.hop;
            for (i, c) in buf.iter_mut().enumerate() {
                *c = Complex::new(w.samples[start + i] as f64 * self.window[i], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for (first, weights) in &self.filters {
                let e: f64 = weights.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum();
                out.push(e);
            }
        }
        MelSpectrogram::new(frames, cfg.n_mels, out)
    }

    pub fn compute(&self, w: &Waveform) -> Result<MelSpectrogram> {
        let mut m = self.power_mel(w)?;
        let floor = self.cfg.log_floor;
        for v in m.data_mut() {
            *v = v.max(floor).ln();
        }
        Ok(m)
    }

    /// Center frequency (Hz) of every mel filter.
    pub fn centers(&self) -> Vec<f64> {
        let (m_lo, m_hi) = (hz_to_mel(self.cfg.f_min), hz_to_mel(self.cfg.f_max));
        (1..=self.cfg.n_mels)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (self.cfg.n_mels + 1) as f64))
            .collect()
    }
}

/// Hann-windowed STFT, power spectrum, HTK mel filterbank, natural log.
pub fn compute_mel(w: &Waveform, cfg: &MelConfig) -> Result<MelSpectrogram> {
    MelFrontend::new(*cfg, w.sample_rate)?.compute(w)
}

/// Frozen per-bin normalization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(bins: usize) -> Self {
        Self { mean: vec![0.0; bins], std: vec![1.0; bins] }
    }

    /// Per-bin mean and population std over every frame of every input.
    pub fn fit(specs: &[MelSpectrogram]) -> Result<Self> {
        let bins = specs.first().map(MelSpectrogram::bins).ok_or_else(|| Error::Config("no spectrograms".into()))?;
        let mut sum = vec![0.0; bins];
        let mut sq = vec![0.0; bins];
        let mut n = 0usize;
        for s in specs {
            if s.bins() != bins {
                return Err(Error::Shape("spectrograms disagree on bin count".into()));
            }
            for t in 0..s.frames() {
                for (f, v) in s.row(t).iter().enumerate() {
                    sum[f] += v;
                    sq[f] += v * v;
                }
            }
            n += s.frames();
        }
        let n = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq.iter().zip(&mean).map(|(q, m)| (q / n - m * m).max(0.0).sqrt()).collect();
        Ok(Self { mean, std })
    }
}

/// `(x − mean) / std` per mel bin.
pub fn normalize(m: &MelSpectrogram, stats: &NormStats) -> Result<MelSpectrogram> {
    if stats.mean.len() != m.bins() || stats.std.len() != m.bins() {
        return Err(Error::Shape(format!("stats for {} bins, spectrogram has {}", stats.mean.len(), m.bins())));
    }
    if let Some(f) = stats.std.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::Config(format!("std of bin {f} is not positive")));
    }
    let bins = m.bins();
    let data = m.data().iter().enumerate().map(|(i, v)| (v - stats.mean[i % bins]) / stats.std[i % bins]).collect();
    MelSpectrogram::new(m.frames(), bins, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sine(freq: f64, seconds: f64, sr: u32) -> Waveform {
        let n = (seconds * sr as f64) as usize;
        let samples =
            (0..n).map(|i| (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin()) as f32).collect();
        Waveform::new(samples, sr)
    }

    #[test]
    fn one_second_clip_has_135_frames() {
        let m = compute_mel(&sine(440.0, 1.0, 44_100), &MelConfig::default()).unwrap();
        assert_eq!(m.frames(), 135);
        assert_eq!(m.bins(), 64);
    }

    #[test]
    fn silence_hits_the_log_floor() {
        let w = Waveform::new(vec![0.0; 4096], 44_100);
        let m = compute_mel(&w, &MelConfig::default()).unwrap();
        let floor = 1e-10f64.ln();
        assert!(m.data().iter().all(|&v| v == floor));
    }

    #[test]
    fn one_khz_tone_peaks_in_the_bin_centered_near_one_khz() {
        let m = compute_mel(&sine(1000.0, 1.0, 44_100), &MelConfig::default()).unwrap();
        let mut energy = vec![0.0; m.bins()];
        for t in 0..m.frames() {
            for (f, v) in m.row(t).iter().enumerate() {
                energy[f] += v.exp();
            }
        }
        let peak = crate::linalg::argmax(&energy);
        // Independent evaluation of m = 2595 log10(1 + f/700) on the 66-point
        // edge grid spanning 50..8000 Hz: filters 20 (center 955.6 Hz) and
        // 21 (center 1019.3 Hz) both bracket 1 kHz; the triangle weights there
        // are 0.30 and 0.70, so filter 21 carries the peak.
        assert_eq!(peak, 21);
    }

    #[test]
    fn short_input_and_bad_config_are_rejected() {
        let w = Waveform::new(vec![0.0; 1023], 44_100);
        assert!(matches!(compute_mel(&w, &MelConfig::default()), Err(Error::InputTooShort(_))));
        let w = Waveform::new(vec![0.0; 2048], 8_000);
        assert!(matches!(compute_mel(&w, &MelConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn normalize_identity_and_constant_cases() {
        let m = MelSpectrogram::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(normalize(&m, &NormStats::identity(3)).unwrap(), m);

        let c = MelSpectrogram::new(2, 3, vec![2.5; 6]).unwrap();
        let stats = NormStats { mean: vec![2.5; 3], std: vec![1.0; 3] };
        assert!(normalize(&c, &stats).unwrap().data().iter().all(|&v| v == 0.0));

        let zero = NormStats { mean: vec![0.0; 3], std: vec![1.0, 0.0, 1.0] };
        assert!(matches!(normalize(&m, &zero), Err(Error::Config(_))));
    }

    #[test]
    fn self_normalized_matrix_has_zero_mean_unit_std() {
        use rand::Rng;
        let mut rng = crate::seed::rng(3, "test", 0);
        let m = MelSpectrogram::new(3, 64, (0..192).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap();
        let stats = NormStats::fit(std::slice::from_ref(&m)).unwrap();
        let n = normalize(&m, &stats).unwrap();
        let again = NormStats::fit(std::slice::from_ref(&n)).unwrap();
        assert!(again.mean.iter().all(|v| v.abs() < 1e-12));
        assert!(again.std.iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn frame_count_matches_formula(len in 1024usize..20_000) {
            let w = Waveform::new(vec![0.1; len], 44_100);
            let m = compute_mel(&w, &MelConfig::default()).unwrap();
            prop_assert_eq!(m.frames(), (len - 1024) / 320 + 1);
        }

        #[test]
        fn doubling_amplitude_never_lowers_energy(seed in 0u64..1000) {
            use rand::Rng;
            let mut rng = crate::seed::rng(seed, "test", 0);
            let samples: Vec<f32> = (0..3000).map(|_| rng.gen_range(-0.4f32..0.4)).collect();
            let louder: Vec<f32> = samples.iter().map(|s| s * 2.0).collect();
            let fe = MelFrontend::new(MelConfig::default(), 44_100).unwrap();
            let a = fe.power_mel(&Waveform::new(samples, 44_100)).unwrap();
            let b = fe.power_mel(&Waveform::new(louder, 44_100)).unwrap();
            prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| y >= x));
        }
    }

    #[test]
    fn output_is_bit_deterministic() {
        let w = sine(333.0, 0.3, 44_100);
        let a = compute_mel(&w, &MelConfig::default()).unwrap();
        let b = compute_mel(&w, &MelConfig::default()).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
