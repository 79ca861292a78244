use mcgtta_core::augment::{freq_mask, time_freq_mask, time_mask, time_reorder};
use mcgtta_core::dsp::MelSpectrogram;
use mcgtta_core::{make_views, AugmentConfig, AugmentOp};
use proptest::prelude::*;

fn random_mat(frames: usize, bins: usize, seed: u64) -> MelSpectrogram {
    use rand::Rng;
    let mut rng = mcgtta_core::seed::rng(seed, "mat", 0);
    MelSpectrogram::new(frames, bins, (0..frames * bins).map(|_| rng.gen_range(-20.0..5.0)).collect()).unwrap()
}

fn bits(v: f64) -> u64 {
    v.to_bits()
}

#[test]
fn time_reorder_is_an_involution_for_every_even_length() {
    for t in (2..=64).step_by(2) {
        let x = random_mat(t, 7, t as u64);
        let twice = time_reorder(&time_reorder(&x).unwrap()).unwrap();
        assert!(x.data().iter().zip(twice.data()).all(|(a, b)| bits(*a) == bits(*b)), "T = {t}");
    }
}

#[test]
fn five_views_use_the_listed_operators_in_order() {
    let x = random_mat(100, 64, 1);
    let v = make_views(&x, &AugmentConfig { n_views: 5, ..AugmentConfig::default() }).unwrap();
    assert_eq!(v.tags(), ["ID", "TM", "FM", "TFM", "TR"]);
    assert_eq!(v.views[0], x);
    assert!(v.views.iter().all(|m| m.frames() == 100 && m.bins() == 64));
}

#[test]
fn eight_views_cycle_after_the_identity() {
    let x = random_mat(100, 64, 2);
    let v = make_views(&x, &AugmentConfig::default()).unwrap();
    use AugmentOp::*;
    let ops: Vec<_> = v.provenance.iter().map(|p| p.op).collect();
    assert_eq!(ops, [Identity, TimeMask, FreqMask, TimeFreqMask, TimeReorder, TimeMask, FreqMask, TimeFreqMask]);
}

#[test]
fn view_randomness_follows_the_seed() {
    let x = random_mat(100, 64, 3);
    let cfg = AugmentConfig { seed: 9, ..AugmentConfig::default() };
    assert_eq!(make_views(&x, &cfg).unwrap(), make_views(&x, &cfg).unwrap());
    let other = make_views(&x, &AugmentConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(make_views(&x, &cfg).unwrap().provenance, other.provenance);
}

#[test]
fn masks_wider_than_the_config_allows_are_rejected() {
    let x = random_mat(10, 8, 4);
    assert!(make_views(&x, &AugmentConfig { max_time_mask: 10, ..AugmentConfig::default() }).is_err());
    assert!(make_views(&x, &AugmentConfig { max_time_mask: 5, max_freq_mask: 8, ..AugmentConfig::default() }).is_err());
    assert!(make_views(&x, &AugmentConfig { n_views: 0, ..AugmentConfig::default() }).is_err());
}

proptest! {
    #[test]
    fn time_mask_touches_only_its_rows(t in 2usize..40, f in 1usize..16, a in 0usize..40, w in 0usize..40, seed in any::<u64>()) {
        let (start, width) = (a % t, w % t);
        prop_assume!(start + width <= t);
        let x = random_mat(t, f, seed);
        let y = time_mask(&x, start, width).unwrap();
        let mean = x.mean();
        for i in 0..t {
            for j in 0..f {
                let inside = (start..start + width).contains(&i);
                let want = if inside { mean } else { x.get(i, j) };
                prop_assert_eq!(bits(y.get(i, j)), bits(want));
            }
        }
    }

    #[test]
    fn freq_mask_touches_only_its_columns(t in 1usize..30, f in 2usize..40, a in 0usize..40, w in 0usize..40, seed in any::<u64>()) {
        let (start, width) = (a % f, w % f);
        prop_assume!(start + width <= f);
        let x = random_mat(t, f, seed);
        let y = freq_mask(&x, start, width).unwrap();
        for i in 0..t {
            for j in 0..f {
                if !(start..start + width).contains(&j) {
                    prop_assert_eq!(bits(y.get(i, j)), bits(x.get(i, j)));
                } else {
                    prop_assert_eq!(bits(y.get(i, j)), bits(x.mean()));
                }
            }
        }
    }

    #[test]
    fn joint_mask_is_the_union_of_both(t in 2usize..30, f in 2usize..30, seed in any::<u64>()) {
        let x = random_mat(t, f, seed);
        let (ts, tw, fs, fw) = (seed as usize % t, 1, (seed >> 8) as usize % f, 1);
        let y = time_freq_mask(&x, ts, tw, fs, fw).unwrap();
        for i in 0..t {
            for j in 0..f {
                let inside = i == ts || j == fs;
                prop_assert_eq!(bits(y.get(i, j)), bits(if inside { x.mean() } else { x.get(i, j) }));
            }
        }
    }

    #[test]
    fn generated_views_keep_outside_cells(seed in any::<u64>(), n in 1usize..12) {
        let x = random_mat(40, 16, seed);
        let v = make_views(&x, &AugmentConfig { n_views: n, max_time_mask: 10, max_freq_mask: 4, seed }).unwrap();
        prop_assert_eq!(v.len(), n);
        for (m, p) in v.views.iter().zip(&v.provenance) {
            if p.op == AugmentOp::TimeReorder || p.op == AugmentOp::Identity {
                continue;
            }
            for i in 0..40 {
                for j in 0..16 {
                    let in_t = p.time.is_some_and(|(s, w)| (s..s + w).contains(&i));
                    let in_f = p.freq.is_some_and(|(s, w)| (s..s + w).contains(&j));
                    if !in_t && !in_f {
                        prop_assert_eq!(bits(m.get(i, j)), bits(x.get(i, j)));
                    }
                }
            }
            if let Some((_, w)) = p.time { prop_assert!((1..=10).contains(&w)); }
            if let Some((_, w)) = p.freq { prop_assert!((1..=4).contains(&w)); }
        }
    }
}
