//! Run checkpoint (JSON header line + f64 blocks for θ1, θ2 and the AdamW
//! moments) and the JSON-lines trace of steps and predictions.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::engine::{AdaptConfig, AdaptRun};
use crate::error::{Error, Result};
use crate::model::checkpoint::{read_blocks, split_header, write_blocks, BlockInfo};

pub const RUN_FORMAT: &str = "mcgtta-run";
pub const RUN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub format: String,
    pub schema_version: u32,
    pub config: AdaptConfig,
    pub seed: u64,
    pub model_hash: String,
    pub cnet_layers: Vec<usize>,
    pub dnet_layers: Vec<usize>,
    pub optimizer_steps: [u64; 2],
    pub blocks: Vec<BlockInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunCheckpoint {
    pub header: RunHeader,
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    pub moments: [Vec<f64>; 4],
}

const BLOCK_NAMES: [&str; 6] = ["theta1", "theta2", "cnet_m", "cnet_v", "dnet_m", "dnet_v"];

pub fn save_run_checkpoint(path: &Path, run: &AdaptRun, seed: u64, model_hash: &str) -> Result<()> {
    let s = &run.final_state;
    let o = &run.optimizer;
    let blocks: [(&str, &[f64]); 6] = [
        (BLOCK_NAMES[0], s.cnet.net.params()),
        (BLOCK_NAMES[1], s.dnet.net.params()),
        (BLOCK_NAMES[2], &o.cnet.m),
        (BLOCK_NAMES[3], &o.cnet.v),
        (BLOCK_NAMES[4], &o.dnet.m),
        (BLOCK_NAMES[5], &o.dnet.v),
    ];
    let header = RunHeader {
        format: RUN_FORMAT.into(),
        schema_version: RUN_SCHEMA_VERSION,
        config: run.config,
        seed,
        model_hash: model_hash.into(),
        cnet_layers: s.cnet.net.dims().to_vec(),
        dnet_layers: s.dnet.net.dims().to_vec(),
        optimizer_steps: [o.cnet.step, o.dnet.step],
        blocks: blocks.iter().map(|(n, d)| BlockInfo { name: (*n).into(), len: d.len() }).collect(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    write_blocks(&mut out, &blocks);
    fs::write(path, out)?;
    Ok(())
}

pub fn load_run_checkpoint(path: &Path) -> Result<RunCheckpoint> {
    let bytes = fs::read(path)?;
    let (head, payload) = split_header(&bytes)?;
    let header: RunHeader = serde_json::from_slice(head)?;
    if header.format != RUN_FORMAT {
        return Err(Error::Format(format!("not a run checkpoint (format {:?})", header.format)));
    }
    if header.schema_version != RUN_SCHEMA_VERSION {
        return Err(Error::Schema { expected: RUN_SCHEMA_VERSION, found: header.schema_version });
    }
    if header.blocks.iter().map(|b| b.name.as_str()).ne(BLOCK_NAMES) {
        return Err(Error::Format("unexpected run block layout".into()));
    }
    let mut b = read_blocks(payload, &header.blocks)?.into_iter();
    let mut next = || b.next().expect("block count checked");
    Ok(RunCheckpoint { theta1: next(), theta2: next(), moments: [next(), next(), next(), next()], header })
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum TraceLine<'a> {
    Step(&'a super::engine::StepRecord),
    Prediction { index: usize, prediction: usize },
}

/// One line per optimization step, then one per sample prediction.
pub fn write_trace_jsonl(path: &Path, run: &AdaptRun) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for r in &run.trace {
        serde_json::to_writer(&mut f, &TraceLine::Step(r))?;
        f.write_all(b"\n")?;
    }
    for (index, &prediction) in run.predictions.iter().enumerate() {
        serde_json::to_writer(&mut f, &TraceLine::Prediction { index, prediction })?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}
