//! CSV and JSON-lines report files.
//!
//! Every CSV row and the first line of every detail file carry
//! `schema_version`; readers reject any other version.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::eval::{CrossDomainMatrix, RunReport};
use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One CSV line per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub schema_version: u32,
    pub config_hash: String,
    pub name: String,
    pub seed: u64,
    pub depth: usize,
    pub width_mult: usize,
    pub zero_shot_acc: f64,
    pub adapted_acc: f64,
    pub delta: f64,
    pub final_consistency: Option<f64>,
    pub final_contrastive: Option<f64>,
    pub final_loss: f64,
}

impl From<&RunReport> for RunRow {
    fn from(r: &RunReport) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            config_hash: r.config_hash.clone(),
            name: r.name.clone(),
            seed: r.seed,
            depth: r.config.net.depth,
            width_mult: r.config.net.width_mult,
            zero_shot_acc: r.zero_shot.accuracy,
            adapted_acc: r.adapted.accuracy,
            delta: r.delta,
            final_consistency: r.final_consistency,
            final_contrastive: r.final_contrastive,
            final_loss: r.final_loss,
        }
    }
}

pub fn write_runs_csv(path: &Path, rows: &[RunRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a runs CSV; the schema version is checked before the row is decoded.
pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == "schema_version")
        .ok_or_else(|| Error::Format(format!("{}: no schema_version column", path.display())))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let found: u32 = rec
            .get(col)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Format(format!("{}: unreadable schema_version", path.display())))?;
        if found != REPORT_SCHEMA_VERSION {
            return Err(Error::Schema { expected: REPORT_SCHEMA_VERSION, found });
        }
        rows.push(rec.deserialize(Some(&headers))?);
    }
    Ok(rows)
}

/// Per-config mean over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub schema_version: u32,
    pub config_hash: String,
    pub name: String,
    pub n_seeds: usize,
    pub seeds: String,
    pub mean_zero_shot_acc: f64,
    pub mean_adapted_acc: f64,
    pub mean_delta: f64,
    pub mean_final_loss: f64,
}

/// Groups rows by config hash, ordered by hash then by first appearance of
/// the name.
pub fn summarize(rows: &[RunRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<&str, Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.config_hash.as_str()).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(hash, g)| {
            let n = g.len() as f64;
            let avg = |f: fn(&RunRow) -> f64| g.iter().map(|r| f(r)).sum::<f64>() / n;
            SummaryRow {
                schema_version: REPORT_SCHEMA_VERSION,
                config_hash: hash.to_string(),
                name: g[0].name.clone(),
                n_seeds: g.len(),
                seeds: g.iter().map(|r| r.seed.to_string()).collect::<Vec<_>>().join(";"),
                mean_zero_shot_acc: avg(|r| r.zero_shot_acc),
                mean_adapted_acc: avg(|r| r.adapted_acc),
                mean_delta: avg(|r| r.delta),
                mean_final_loss: avg(|r| r.final_loss),
            }
        })
        .collect()
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per adaptation shift: zero-shot accuracy, one column per test
/// shift, then the row average, row-average delta and diagonal delta.
pub fn write_cross_domain_csv(path: &Path, m: &CrossDomainMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["schema_version".to_string(), "adapt_shift".into(), "zero_shot".into()];
    header.extend(m.shifts.iter().map(|s| format!("test:{s}")));
    header.extend(["row_avg".into(), "row_avg_delta".into(), "diag_delta".into()]);
    w.write_record(&header)?;
    for (a, name) in m.shifts.iter().enumerate() {
        let mut rec = vec![REPORT_SCHEMA_VERSION.to_string(), name.clone(), m.zero_shot[a].to_string()];
        rec.extend(m.accuracy[a].iter().map(f64::to_string));
        rec.push(m.row_average(a).to_string());
        rec.push(m.row_average_delta(a).to_string());
        rec.push(m.diagonal_delta(a).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// A header line echoing the configuration, then one line per sample.
pub fn write_detail_jsonl(path: &Path, report: &RunReport, echo: Option<&serde_json::Value>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let head = json!({
        "kind": "run",
        "schema_version": REPORT_SCHEMA_VERSION,
        "name": report.name,
        "seed": report.seed,
        "config_hash": report.config_hash,
        "config": report.config,
        "effective_config": echo,
        "zero_shot": report.zero_shot,
        "adapted": report.adapted,
    });
    writeln!(w, "{head}")?;
    for (i, ((&label, &zs), &pred)) in
        report.labels.iter().zip(&report.zero_shot_predictions).zip(&report.predictions).enumerate()
    {
        let line = json!({"kind": "sample", "index": i, "label": label, "zero_shot": zs, "prediction": pred});
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}
