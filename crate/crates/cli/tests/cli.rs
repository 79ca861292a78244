mod common;

use common::{code, csv_rows, error_line, Workspace};

#[test]
fn missing_config_file_is_a_config_error_naming_the_path() {
    let ws = Workspace::new();
    let out = ws.run(&["pretrain", "--config", "nope.toml"]);
    assert_eq!(code(&out), 2);
    let e = error_line(&out);
    assert_eq!(e["exit_code"], 2);
    assert!(e["message"].as_str().unwrap().contains("nope.toml"));
}

#[test]
fn unknown_and_invalid_keys_exit_with_two() {
    let ws = Workspace::new();
    std::fs::write(ws.path("bad.toml"), "n_clases = 4\n").unwrap();
    let out = ws.run(&["pretrain", "--config", "bad.toml"]);
    assert_eq!(code(&out), 2);
    assert!(error_line(&out)["message"].as_str().unwrap().contains("n_clases"));
    assert_eq!(code(&ws.run(&["pretrain", "--config", "small.toml", "--set", "n_views=0"])), 2);
    assert_eq!(code(&ws.run(&["pretrain", "--config", "small.toml", "--mode", "sideways"])), 2);
    assert_eq!(code(&ws.run(&["pretrain", "--config", "small.toml", "--set", "max_freq_mask=64"])), 2);
}

#[test]
fn model_mismatches_exit_with_three() {
    let ws = Workspace::new();
    ws.prepared();
    let base = ["adapt", "--config", "small.toml", "--model", "model.bin", "--dataset", "data", "--out", "a"];
    let wrong_hash = [&base[..], &["--set", "model_hash=\"00ff\""]].concat();
    let out = ws.run(&wrong_hash);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let wrong_dims = [&base[..], &["--set", "embed_dim=32"]].concat();
    assert_eq!(code(&ws.run(&wrong_dims)), 3);
    let bytes = ws.read("model.bin");
    std::fs::write(ws.path("model.bin"), &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(code(&ws.run(&base)), 3);
}

#[test]
fn the_right_model_hash_is_accepted() {
    let ws = Workspace::new();
    let p = ws.ok(&["pretrain", "--config", "small.toml", "--out", "model.bin"]);
    ws.ok(&["generate", "--config", "small.toml", "--out", "data"]);
    let hash = p["model_hash"].as_str().unwrap();
    let set = format!("model_hash=\"{hash}\"");
    ws.ok(&[
        "adapt",
        "--config",
        "small.toml",
        "--model",
        "model.bin",
        "--dataset",
        "data",
        "--out",
        "a",
        "--set",
        &set,
    ]);
}

#[test]
fn schema_mismatch_exits_with_four() {
    let ws = Workspace::new();
    ws.prepared();
    ws.ok(&["adapt", "--config", "small.toml", "--model", "model.bin", "--dataset", "data", "--out", "a"]);
    let text = String::from_utf8(ws.read("a/runs.csv")).unwrap();
    let (head, body) = text.split_once('\n').unwrap();
    std::fs::write(ws.path("old.csv"), format!("{head}\n2{}", &body[1..])).unwrap();
    let out = ws.run(&["report", "--out", "summary.csv", "old.csv"]);
    assert_eq!(code(&out), 4);
    assert_eq!(error_line(&out)["exit_code"], 4);

    let manifest = ws.path("data/manifest.json");
    let m = std::fs::read_to_string(&manifest).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 7");
    std::fs::write(&manifest, m).unwrap();
    let out = ws.run(&["adapt", "--config", "small.toml", "--model", "model.bin", "--dataset", "data", "--out", "b"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_dataset_is_a_config_error() {
    let ws = Workspace::new();
    ws.ok(&["pretrain", "--config", "small.toml", "--out", "model.bin"]);
    let out = ws.run(&["adapt", "--config", "small.toml", "--model", "model.bin", "--dataset", "nowhere"]);
    assert_eq!(code(&out), 2);
    assert!(error_line(&out)["message"].as_str().unwrap().contains("nowhere"));
}

#[test]
fn seed_changes_results_but_not_the_config_hash() {
    let ws = Workspace::new();
    let a = ws.ok(&["pretrain", "--config", "small.toml", "--out", "m0.bin"]);
    let b = ws.ok(&["pretrain", "--config", "small.toml", "--out", "m1.bin", "--seed", "1"]);
    assert_eq!(a["config_hash"], b["config_hash"]);
    assert_ne!(a["model_hash"], b["model_hash"]);
    let c = ws.ok(&["pretrain", "--config", "small.toml", "--out", "m2.bin", "--lr", "0.5"]);
    assert_ne!(a["config_hash"], c["config_hash"]);
    assert_eq!(c["effective_config"]["lr"], 0.5);
}

#[test]
fn mode_and_batch_size_flags_reach_the_run() {
    let ws = Workspace::new();
    ws.prepared();
    let s = ws.ok(&[
        "adapt",
        "--config",
        "small.toml",
        "--model",
        "model.bin",
        "--dataset",
        "data",
        "--out",
        "a",
        "--mode",
        "online",
        "--batch-size",
        "3",
    ]);
    assert_eq!(s["mode"], "online");
    assert_eq!(s["batch_size"], 3);
    assert_eq!(s["batches"], 7);
    let echo: serde_json::Value = serde_json::from_slice(&ws.read("a/config.json")).unwrap();
    assert_eq!((echo["mode"].as_str(), echo["batch_size"].as_u64()), (Some("online"), Some(3)));
}

#[test]
fn zero_steps_with_one_view_reproduce_zero_shot() {
    let ws = Workspace::new();
    ws.prepared();
    let s = ws.ok(&[
        "adapt",
        "--config",
        "small.toml",
        "--model",
        "model.bin",
        "--dataset",
        "data",
        "--out",
        "a",
        "--steps",
        "0",
        "--n-views",
        "1",
        "--set",
        "disable_dnet=true",
    ]);
    assert_eq!(s["steps"], 0);
    assert_eq!(s["adapted_acc"], s["zero_shot_acc"]);
    let mut lines = std::str::from_utf8(&ws.read("a/detail.jsonl"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .collect::<Vec<_>>();
    assert_eq!(lines.len(), 20);
    for l in lines.drain(..) {
        assert_eq!(l["prediction"], l["zero_shot"], "{l}");
    }
}

#[test]
fn labels_never_reach_adaptation() {
    let ws = Workspace::new();
    ws.prepared();
    ws.ok(&["adapt", "--config", "small.toml", "--model", "model.bin", "--dataset", "data", "--out", "with"]);
    let s =
        ws.ok(&["adapt", "--config", "small.toml", "--model", "model.bin", "--dataset", "blind", "--out", "without"]);
    assert!(s.get("adapted_acc").is_none());
    assert_eq!(ws.read("with/trace.jsonl"), ws.read("without/trace.jsonl"));
    assert_eq!(ws.read("with/run.bin"), ws.read("without/run.bin"));
    assert!(!ws.path("without/runs.csv").exists());
    assert_eq!(code(&ws.run(&["ablate", "--config", "small.toml", "--model", "model.bin", "--dataset", "blind"])), 2);
}

#[test]
fn adapt_does_not_touch_the_checkpoint() {
    let ws = Workspace::new();
    ws.prepared();
    let before = ws.read("model.bin");
    ws.ok(&["adapt", "--config", "small.toml", "--model", "model.bin", "--dataset", "data", "--out", "a"]);
    assert_eq!(ws.read("model.bin"), before);
}

#[test]
fn reruns_are_byte_identical() {
    let ws = Workspace::new();
    ws.prepared();
    let files = ["runs.csv", "trace.jsonl", "run.bin", "detail.jsonl", "config.json"];
    let adapt = ["adapt", "--config", "small.toml", "--model", "model.bin", "--dataset", "data", "--out", "a"];
    let first = ws.ok(&adapt);
    let before: Vec<_> = files.iter().map(|f| ws.read(&format!("a/{f}"))).collect();
    assert_eq!(ws.ok(&adapt), first);
    for (f, b) in files.iter().zip(&before) {
        assert_eq!(&ws.read(&format!("a/{f}")), b, "{f}");
    }
    ws.ok(&["pretrain", "--config", "small.toml", "--out", "again.bin"]);
    assert_eq!(ws.read("model.bin"), ws.read("again.bin"));
}

#[test]
fn report_merges_five_seeds_into_one_row() {
    let ws = Workspace::new();
    ws.prepared();
    let mut inputs = Vec::new();
    for s in 0..5 {
        let out = format!("s{s}");
        ws.ok(&[
            "adapt",
            "--config",
            "small.toml",
            "--model",
            "model.bin",
            "--dataset",
            "data",
            "--out",
            &out,
            "--seed",
            &s.to_string(),
        ]);
        inputs.push(format!("s{s}/runs.csv"));
    }
    let mut args = vec!["report", "--out", "summary.csv"];
    args.extend(inputs.iter().map(String::as_str));
    let r = ws.ok(&args);
    assert_eq!((r["runs"].as_u64(), r["configs"].as_u64()), (Some(5), Some(1)));
    let rows = csv_rows(&ws.path("summary.csv"));
    assert_eq!(rows.len(), 2);
    let col = |name: &str| rows[0].iter().position(|h| h == name).unwrap();
    assert_eq!(rows[1][col("n_seeds")], "5");
    assert_eq!(rows[1][col("seeds")], "0;1;2;3;4");
}

#[test]
fn crossdomain_writes_a_three_by_three_matrix() {
    let ws = Workspace::new();
    ws.ok(&["pretrain", "--config", "small.toml", "--out", "model.bin"]);
    ws.ok(&["crossdomain", "--config", "small.toml", "--model", "model.bin", "--out", "cd.csv"]);
    let rows = csv_rows(&ws.path("cd.csv"));
    assert_eq!(rows.len(), 4);
    let tests: Vec<_> = rows[0].iter().filter(|h| h.starts_with("test:")).collect();
    assert_eq!(tests, ["test:noise:5", "test:tilt:-3", "test:noise:5+tilt:-3"]);
    assert!(ws.path("cd.csv.config.json").exists());
}

#[test]
fn check_grad_passes() {
    let ws = Workspace::new();
    let r = ws.ok(&["check-grad", "--instances", "3"]);
    assert_eq!(r["pass"], true);
    assert!(r["max_rel_error"].as_f64().unwrap() <= 1e-4);
}
