mod common;

use common::random_model;
use mcgtta_core::harness::{
    ablation_matrix, cross_domain_matrix, evaluate_tta, gen_dataset, prepare, read_runs_csv, summarize, write_runs_csv,
    AblationCell, Dataset, DomainShiftSpec, ExperimentConfig, PreparedSet, RunRow, Split, SyntheticDatasetSpec,
};
use mcgtta_core::{tta, Error, Mode, ToyModel};

fn tiny_data(seed: u64) -> Dataset {
    let spec =
        SyntheticDatasetSpec { n_classes: 4, samples_per_class: 5, clip_seconds: 0.25, seed, ..Default::default() };
    gen_dataset(&spec, Split::Test).unwrap()
}

fn tiny_set(model: &ToyModel, exp: &ExperimentConfig) -> PreparedSet {
    prepare(model, &tiny_data(1), exp, 3).unwrap()
}

fn exp() -> ExperimentConfig {
    let mut e = ExperimentConfig::default();
    e.adapt.steps_per_batch = 2;
    e.adapt.lr = 1e-2;
    e
}

#[test]
fn episodic_batch_order_does_not_change_batch_predictions() {
    let model = random_model(1);
    let e = exp();
    let set = tiny_set(&model, &e);
    let st = mcgtta_core::harness::init_prompt_state(&model, 4, &e.net, 0).unwrap();
    let base = tta::run(&model, &st, &set.views, &e.adapt).unwrap();
    let order = [2usize, 0, 3, 1];
    let permuted: Vec<_> = order.iter().flat_map(|&b| set.views[b * 5..b * 5 + 5].to_vec()).collect();
    let run = tta::run(&model, &st, &permuted, &e.adapt).unwrap();
    for (k, &b) in order.iter().enumerate() {
        assert_eq!(run.predictions[k * 5..k * 5 + 5], base.predictions[b * 5..b * 5 + 5]);
        assert_eq!(run.theta_digests[k], base.theta_digests[b]);
    }
    // online mode carries state, so order should matter for θ
    let online = mcgtta_core::AdaptConfig { mode: Mode::Online, ..e.adapt };
    let a = tta::run(&model, &st, &set.views, &online).unwrap();
    let b = tta::run(&model, &st, &permuted, &online).unwrap();
    assert_ne!(a.theta_digests.last(), b.theta_digests.last());
}

#[test]
fn adaptation_leaves_model_bytes_untouched() {
    let model = random_model(2);
    let before = model.to_bytes().unwrap();
    let e = exp();
    let set = tiny_set(&model, &e);
    let (report, run) = evaluate_tta(&model, &set, &e, 0, "x").unwrap();
    assert_eq!(model.to_bytes().unwrap(), before);
    assert_ne!(run.theta_digests[0], mcgtta_core::model::sha256_hex(&[]));
    assert_eq!(report.predictions.len(), 20);
}

#[test]
fn identical_inputs_give_identical_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let model = random_model(3);
    let e = exp();
    let set = tiny_set(&model, &e);
    let mut files = Vec::new();
    for k in 0..2 {
        let (r, _) = evaluate_tta(&model, &set, &e, 4, "run").unwrap();
        let p = dir.path().join(format!("{k}.csv"));
        write_runs_csv(&p, &[RunRow::from(&r)]).unwrap();
        files.push(std::fs::read(p).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let (other, _) = evaluate_tta(&model, &set, &e, 5, "run").unwrap();
    assert_eq!(other.seed, 5);
}

#[test]
fn ablation_matrix_has_forty_distinct_cells_and_ignores_threading() {
    let model = random_model(4);
    let mut e = exp();
    e.adapt.steps_per_batch = 1;
    let set = tiny_set(&model, &e);
    let par = ablation_matrix(&model, &set, &e, 0, true).unwrap();
    let ser = ablation_matrix(&model, &set, &e, 0, false).unwrap();
    assert_eq!(par.len(), 40);
    let names: std::collections::BTreeSet<_> = par.iter().map(|r| r.name.clone()).collect();
    assert_eq!(names.len(), 40);
    let hashes: std::collections::BTreeSet<_> = par.iter().map(|r| r.config_hash.clone()).collect();
    assert_eq!(hashes.len(), 40);
    for (a, b) in par.iter().zip(&ser) {
        assert_eq!(RunRow::from(a), RunRow::from(b));
    }
    for (r, c) in par.iter().zip(AblationCell::all()) {
        assert_eq!(r.name, c.name());
        assert_eq!((r.config.net.depth, r.config.net.width_mult), (c.depth, c.width_mult));
        assert!((1..=4).contains(&c.depth) && [1, 2].contains(&c.width_mult));
    }
    let wo_entropy = par.iter().find(|r| r.name.starts_with("wo-entropy")).unwrap();
    assert!(wo_entropy.final_consistency.is_none() && wo_entropy.final_contrastive.is_some());
}

#[test]
fn cross_domain_matrix_is_square() {
    let model = random_model(5);
    let shifts: Vec<DomainShiftSpec> =
        ["noise:5", "tilt:-3", "noise:5+tilt:-3"].iter().map(|s| s.parse().unwrap()).collect();
    let m = cross_domain_matrix(&model, &tiny_data(2), &shifts, &exp(), 0).unwrap();
    assert_eq!(m.shifts, ["noise:5", "tilt:-3", "noise:5+tilt:-3"]);
    assert_eq!(m.accuracy.len(), 3);
    assert!(m.accuracy.iter().all(|r| r.len() == 3 && r.iter().all(|a| (0.0..=1.0).contains(a))));
    assert!((m.row_average_delta(0) - (m.row_average(0) - m.zero_shot.iter().sum::<f64>() / 3.0)).abs() < 1e-12);
    assert!(cross_domain_matrix(&model, &tiny_data(2), &shifts[..1], &exp(), 0).is_err());
}

#[test]
fn seeds_of_one_configuration_summarize_to_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let model = random_model(6);
    let e = exp();
    let set = tiny_set(&model, &e);
    let mut rows = Vec::new();
    for s in 0..5 {
        let (r, _) = evaluate_tta(&model, &set, &e, s, "cfg").unwrap();
        let p = dir.path().join(format!("s{s}.csv"));
        write_runs_csv(&p, &[RunRow::from(&r)]).unwrap();
        rows.extend(read_runs_csv(&p).unwrap());
    }
    let summary = summarize(&rows);
    assert_eq!(summary.len(), 1);
    assert_eq!(summary[0].n_seeds, 5);
    let mean = rows.iter().map(|r| r.delta).sum::<f64>() / 5.0;
    assert!((summary[0].mean_delta - mean).abs() < 1e-12);

    let p = dir.path().join("s0.csv");
    let text = std::fs::read_to_string(&p).unwrap();
    let (head, body) = text.split_once('\n').unwrap();
    std::fs::write(&p, format!("{head}\n{}", body.replacen('1', "9", 1))).unwrap();
    assert!(matches!(read_runs_csv(&p), Err(Error::Schema { .. })));
}

#[test]
fn accuracy_oracles() {
    let m = mcgtta_core::harness::Metrics::from_predictions(&[0, 1, 1, 2], &[0, 1, 2, 2], 3);
    assert_eq!((m.n_correct, m.n_total), (3, 4));
    assert!((m.accuracy - 0.75).abs() < 1e-15);
    assert_eq!(m.per_class, [1.0, 1.0, 0.5]);
}
