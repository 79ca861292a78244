use std::fs;
use std::path::{Path, PathBuf};

use mcgtta_core::gradcheck::{run_gradcheck, GradCheckConfig};
use mcgtta_core::harness::{
    ablation_matrix, apply_shift, build_model, cross_domain_matrix, init_prompt_state, prepare_views, read_dataset,
    read_runs_csv, score_run, summarize, test_dataset, write_cross_domain_csv, write_dataset, write_detail_jsonl,
    write_runs_csv, write_summary_csv, AblationCell, PreparedSet, RunReport, RunRow, PROMPT_PREFIX,
};
use mcgtta_core::tta::{self, save_run_checkpoint, write_trace_jsonl};
use mcgtta_core::{seed, ToyModel};
use serde_json::json;

use crate::config::Config;
use crate::exit::{io_context, CliError};
use crate::Common;

/// Threshold printed with the check-grad result.
const GRAD_TOLERANCE: f64 = 1e-4;

fn overrides(c: &Common) -> Result<toml::Table, CliError> {
    let mut t = toml::Table::new();
    for kv in &c.set {
        let (k, v) =
            kv.split_once('=').ok_or_else(|| CliError::config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        let value = format!("v = {v}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(v.to_string()));
        t.insert(k.trim().to_string(), value);
    }
    let path = |p: &PathBuf| toml::Value::String(p.display().to_string());
    let mut put = |k: &str, v: Option<toml::Value>| {
        if let Some(v) = v {
            t.insert(k.to_string(), v);
        }
    };
    put("seed", c.seed.map(|v| toml::Value::Integer(v as i64)));
    put("jobs", c.jobs.map(|v| toml::Value::Integer(v as i64)));
    put("model", c.model.as_ref().map(path));
    put("dataset", c.dataset.as_ref().map(path));
    put("out", c.out.as_ref().map(path));
    put("mode", c.mode.clone().map(toml::Value::String));
    put("batch_size", c.batch_size.map(|v| toml::Value::Integer(v as i64)));
    put("steps_per_batch", c.steps.map(|v| toml::Value::Integer(v as i64)));
    put("lr", c.lr.map(toml::Value::Float));
    put("lambda", c.lambda.map(toml::Value::Float));
    put("n_views", c.n_views.map(|v| toml::Value::Integer(v as i64)));
    put("shift", c.shift.clone().map(toml::Value::String));
    Ok(t)
}

fn resolve(c: &Common) -> Result<Config, CliError> {
    let cfg = Config::resolve(c.config.as_deref(), overrides(c)?)?;
    if let Some(n) = cfg.jobs {
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(cfg)
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    p.as_deref().ok_or_else(|| CliError::config(format!("missing `{key}` (config key or --{key})")))
}

fn out_path(cfg: &Config, default: &str) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn print(v: serde_json::Value) {
    println!("{v}");
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<(), CliError> {
    fs::write(path, format!("{v}\n")).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Loads the checkpoint and checks it against the configuration.
fn load_model(cfg: &Config) -> Result<(ToyModel, String), CliError> {
    let path = require(&cfg.model, "model")?;
    let model = ToyModel::load(path).map_err(io_context(path))?;
    let hash = model.hash()?;
    if let Some(expected) = &cfg.model_hash {
        if !expected.eq_ignore_ascii_case(&hash) {
            return Err(CliError::mismatch(format!("model hash {hash} does not match configured {expected}")));
        }
    }
    let setup = cfg.setup();
    if model.dims != setup.dims || model.mel != setup.mel || model.sample_rate != cfg.sample_rate {
        return Err(CliError::mismatch(format!(
            "checkpoint {} was built with different model or frontend settings",
            path.display()
        )));
    }
    Ok((model, hash))
}

fn check_classes(model: &ToyModel, n_classes: usize) -> Result<(), CliError> {
    if PROMPT_PREFIX.len() + n_classes > model.dims.vocab {
        return Err(CliError::mismatch(format!("{n_classes} classes do not fit the model vocabulary")));
    }
    Ok(())
}

pub fn pretrain(c: &Common) -> Result<(), CliError> {
    let cfg = resolve(c)?;
    let out = out_path(&cfg, "model.bin");
    let (model, report) = build_model(&cfg.setup(), cfg.seed)?;
    model.save(&out).map_err(io_context(&out))?;
    print(json!({
        "command": "pretrain",
        "model": out,
        "model_hash": model.hash()?,
        "epochs": report.epochs,
        "heldout_accuracy": report.heldout_accuracy,
        "config_hash": cfg.hash(),
        "effective_config": cfg.echo(),
    }));
    Ok(())
}

pub fn generate(c: &Common, no_labels: bool) -> Result<(), CliError> {
    let cfg = resolve(c)?;
    let out = require(&cfg.out, "out")?;
    let clean = test_dataset(&cfg.setup(), cfg.seed)?;
    let shifted = apply_shift(&clean, &cfg.shift_spec()?, seed::derive(cfg.seed, "shift", 0))?;
    write_dataset(out, &shifted, !no_labels).map_err(io_context(out))?;
    print(json!({
        "command": "generate",
        "dataset": out,
        "clips": shifted.len(),
        "labels": !no_labels,
        "shift": cfg.shift,
        "config_hash": cfg.hash(),
    }));
    Ok(())
}

pub fn adapt(c: &Common) -> Result<(), CliError> {
    let cfg = resolve(c)?;
    let (model, model_hash) = load_model(&cfg)?;
    let dir = require(&cfg.dataset, "dataset")?;
    let data = read_dataset(dir).map_err(io_context(dir))?;
    check_classes(&model, data.n_classes)?;
    if data.clips.iter().any(|w| w.sample_rate != model.sample_rate) {
        return Err(CliError::mismatch(format!("dataset {} has clips at another sample rate", dir.display())));
    }
    let out = out_path(&cfg, "adapt-out");
    fs::create_dir_all(&out).map_err(|e| CliError::config(format!("{}: {e}", out.display())))?;
    let exp = cfg.experiment();
    let views = prepare_views(&model, &data.clips, &exp, cfg.seed)?;
    // labels stay on this side: the engine only ever sees `views`
    let state = init_prompt_state(&model, data.n_classes, &exp.net, cfg.seed)?;
    let run = tta::run(&model, &state, &views, &exp.adapt)?;
    save_run_checkpoint(&out.join("run.bin"), &run, cfg.seed, &model_hash)?;
    write_trace_jsonl(&out.join("trace.jsonl"), &run)?;
    write_json(&out.join("config.json"), &cfg.echo())?;
    let mut summary = json!({
        "command": "adapt",
        "out": out,
        "steps": run.trace.len(),
        "batches": run.theta_digests.len(),
        "model_hash": model_hash,
        "config_hash": cfg.hash(),
        "mode": exp.adapt.mode,
        "batch_size": exp.adapt.batch_size,
    });
    if let Some(labels) = data.labels {
        let set = PreparedSet { views, labels, n_classes: data.n_classes };
        let mut report = score_run(&model, &set, &exp, cfg.seed, "adapt", &run)?;
        report.config_hash = cfg.hash();
        write_runs_csv(&out.join("runs.csv"), &[RunRow::from(&report)])?;
        write_detail_jsonl(&out.join("detail.jsonl"), &report, Some(&cfg.echo()))?;
        summary["zero_shot_acc"] = json!(report.zero_shot.accuracy);
        summary["adapted_acc"] = json!(report.adapted.accuracy);
        summary["delta"] = json!(report.delta);
    }
    print(summary);
    Ok(())
}

pub fn ablate(c: &Common) -> Result<(), CliError> {
    let cfg = resolve(c)?;
    let (model, _) = load_model(&cfg)?;
    let dir = require(&cfg.dataset, "dataset")?;
    let data = read_dataset(dir).map_err(io_context(dir))?.into_labeled()?;
    check_classes(&model, data.n_classes)?;
    let out = out_path(&cfg, "ablation.csv");
    let exp = cfg.experiment();
    let views = prepare_views(&model, &data.clips, &exp, cfg.seed)?;
    let set = PreparedSet { views, labels: data.labels.clone(), n_classes: data.n_classes };
    let parallel = cfg.jobs.map_or(true, |j| j > 1);
    let mut reports: Vec<RunReport> = ablation_matrix(&model, &set, &exp, cfg.seed, parallel)?;
    let mut echoes = String::new();
    for (r, cell) in reports.iter_mut().zip(AblationCell::all()) {
        let cell_cfg = cfg.with_experiment(&cell.config(&exp));
        r.config_hash = cell_cfg.hash();
        echoes.push_str(
            &json!({"name": r.name, "config_hash": r.config_hash, "effective_config": cell_cfg.echo()}).to_string(),
        );
        echoes.push('\n');
    }
    let rows: Vec<RunRow> = reports.iter().map(RunRow::from).collect();
    write_runs_csv(&out, &rows).map_err(io_context(&out))?;
    let side = sidecar(&out, ".configs.jsonl");
    fs::write(&side, echoes).map_err(|e| CliError::internal(format!("{}: {e}", side.display())))?;
    print(json!({"command": "ablate", "out": out, "rows": rows.len(), "config_hash": cfg.hash()}));
    Ok(())
}

pub fn crossdomain(c: &Common) -> Result<(), CliError> {
    let cfg = resolve(c)?;
    let (model, _) = load_model(&cfg)?;
    check_classes(&model, cfg.n_classes)?;
    let out = out_path(&cfg, "crossdomain.csv");
    let clean = test_dataset(&cfg.setup(), cfg.seed)?;
    let m = cross_domain_matrix(&model, &clean, &cfg.shift_specs()?, &cfg.experiment(), cfg.seed)?;
    write_cross_domain_csv(&out, &m).map_err(io_context(&out))?;
    write_json(&sidecar(&out, ".config.json"), &json!({"config_hash": cfg.hash(), "effective_config": cfg.echo()}))?;
    print(json!({"command": "crossdomain", "out": out, "shifts": m.shifts, "config_hash": cfg.hash()}));
    Ok(())
}

pub fn report(inputs: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for p in inputs {
        rows.extend(read_runs_csv(p).map_err(|e| match e {
            mcgtta_core::Error::Csv(err) if err.is_io_error() => CliError::config(format!("{}: {err}", p.display())),
            other => io_context(p)(other),
        })?);
    }
    let summary = summarize(&rows);
    write_summary_csv(out, &summary).map_err(io_context(out))?;
    print(json!({"command": "report", "out": out, "runs": rows.len(), "configs": summary.len()}));
    Ok(())
}

pub fn check_grad(instances: usize, seed_value: u64) -> Result<(), CliError> {
    let cfg = GradCheckConfig { instances, seed: seed_value, ..GradCheckConfig::default() };
    let r = run_gradcheck(&cfg)?;
    let pass = r.max_rel_error <= GRAD_TOLERANCE;
    print(json!({
        "command": "check-grad",
        "instances": r.instances,
        "params_checked": r.params_checked,
        "max_rel_error": r.max_rel_error,
        "worst": r.worst,
        "tolerance": GRAD_TOLERANCE,
        "pass": pass,
    }));
    if pass {
        Ok(())
    } else {
        Err(CliError::internal(format!("max relative error {} exceeds {GRAD_TOLERANCE}", r.max_rel_error)))
    }
}
