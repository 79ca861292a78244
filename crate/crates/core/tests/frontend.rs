use mcgtta_core::dsp::{hz_to_mel, mel_to_hz};
use mcgtta_core::{compute_mel, Error, MelConfig, MelFrontend, Waveform};
use proptest::prelude::*;
use std::f64::consts::PI;

fn tone(freq: f64, seconds: f64, sr: u32) -> Waveform {
    let n = (seconds * sr as f64) as usize;
    Waveform::new((0..n).map(|i| (0.5 * (2.0 * PI * freq * i as f64 / sr as f64).sin()) as f32).collect(), sr)
}

/// Filter with the largest HTK triangle weight at `f`, computed from scratch.
fn oracle_bin(f: f64, cfg: &MelConfig) -> usize {
    let mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let (lo, hi) = (mel(cfg.f_min), mel(cfg.f_max));
    let edges: Vec<f64> =
        (0..cfg.n_mels + 2).map(|i| hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64)).collect();
    let weight = |k: usize| {
        let (a, c, b) = (edges[k], edges[k + 1], edges[k + 2]);
        if f <= a || f >= b {
            0.0
        } else if f <= c {
            (f - a) / (c - a)
        } else {
            (b - f) / (b - c)
        }
    };
    (0..cfg.n_mels).max_by(|&x, &y| weight(x).total_cmp(&weight(y))).unwrap()
}

#[test]
fn defaults_are_the_reference_frontend() {
    let c = MelConfig::default();
    assert_eq!((c.n_mels, c.hop, c.window), (64, 320, 1024));
    assert_eq!((c.f_min, c.f_max), (50.0, 8000.0));
    assert_eq!(c.log_floor, 1e-10);
}

#[test]
fn one_khz_tone_lands_in_the_oracle_bin() {
    let cfg = MelConfig::default();
    let m = compute_mel(&tone(1000.0, 1.0, 44_100), &cfg).unwrap();
    let expected = oracle_bin(1000.0, &cfg);
    for t in 0..m.frames() {
        let row = m.row(t);
        let peak = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(peak, expected, "frame {t}");
    }
}

#[test]
fn tone_peaks_track_the_oracle_across_frequencies() {
    let cfg = MelConfig::default();
    for f in [250.0, 500.0, 2000.0, 4000.0] {
        let m = compute_mel(&tone(f, 0.2, 44_100), &cfg).unwrap();
        let row = m.row(m.frames() / 2);
        let peak = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert!(peak.abs_diff(oracle_bin(f, &cfg)) <= 1, "{f} Hz peaked in {peak}");
    }
}

#[test]
fn mel_scale_round_trips() {
    for f in [0.0, 50.0, 700.0, 1000.0, 8000.0] {
        assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
    }
    assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
}

#[test]
fn centers_are_increasing_and_inside_the_band() {
    let f = MelFrontend::new(MelConfig::default(), 44_100).unwrap();
    let c = f.centers();
    assert_eq!(c.len(), 64);
    assert!(c.windows(2).all(|w| w[0] < w[1]));
    assert!(c[0] > 50.0 && c[63] < 8000.0);
}

#[test]
fn clips_shorter_than_a_window_are_rejected() {
    let w = Waveform::new(vec![0.0; 1023], 44_100);
    assert!(matches!(compute_mel(&w, &MelConfig::default()), Err(Error::InputTooShort(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn frame_count_formula_is_exact(len in 1024usize..20_000) {
        let cfg = MelConfig::default();
        let w = Waveform::new(vec![0.01; len], 44_100);
        let m = compute_mel(&w, &cfg).unwrap();
        prop_assert_eq!(m.frames(), 1 + (len - 1024) / 320);
        prop_assert_eq!(m.bins(), 64);
        prop_assert!(m.is_finite());
    }
}
