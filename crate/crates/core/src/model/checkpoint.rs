//! Model checkpoint: one JSON header line followed by little-endian f64
//! parameter blocks in the order listed in the header.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AudioEncoderParams, ModelDims, TextEncoderParams, TokenEmbeddingTable, ToyModel};
use crate::dsp::{MelConfig, NormStats};
use crate::error::{Error, Result};
use crate::mlp::Mlp;

pub const MODEL_FORMAT: &str = "mcgtta-model";
pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    schema_version: u32,
    dims: ModelDims,
    tau: f64,
    sample_rate: u32,
    mel: MelConfig,
    audio_layers: Vec<usize>,
    text_block_layers: Vec<usize>,
    text_proj_layers: Vec<usize>,
    blocks: Vec<BlockInfo>,
}

/// Splits `bytes` into the header line and the binary payload.
pub(crate) fn split_header(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Format("missing header terminator".into()))?;
    Ok((&bytes[..nl], &bytes[nl + 1..]))
}

pub(crate) fn write_blocks(out: &mut Vec<u8>, blocks: &[(&str, &[f64])]) {
    for (_, data) in blocks {
        for v in *data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Reads blocks in the order given by `info`.
pub(crate) fn read_blocks(payload: &[u8], info: &[BlockInfo]) -> Result<Vec<Vec<f64>>> {
    let expected: usize = info.iter().map(|b| b.len * 8).sum();
    if payload.len() != expected {
        return Err(Error::Format(format!("payload has {} bytes, header declares {expected}", payload.len())));
    }
    let mut off = 0;
    Ok(info
        .iter()
        .map(|b| {
            let v = payload[off..off + b.len * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            off += b.len * 8;
            v
        })
        .collect())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ToyModel {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let blocks = self.blocks();
        let header = ModelHeader {
            format: MODEL_FORMAT.into(),
            schema_version: MODEL_SCHEMA_VERSION,
            dims: self.dims,
            tau: self.tau,
            sample_rate: self.sample_rate,
            mel: self.mel,
            audio_layers: self.audio.net.dims().to_vec(),
            text_block_layers: self.text.block.dims().to_vec(),
            text_proj_layers: self.text.proj.dims().to_vec(),
            blocks: blocks.iter().map(|(n, d)| BlockInfo { name: (*n).into(), len: d.len() }).collect(),
        };
        let mut out = serde_json::to_vec(&header)?;
        out.push(b'\n');
        write_blocks(&mut out, &blocks);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (head, payload) = split_header(bytes)?;
        let h: ModelHeader = serde_json::from_slice(head)?;
        if h.format != MODEL_FORMAT {
            return Err(Error::Format(format!("not a model checkpoint (format {:?})", h.format)));
        }
        if h.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Schema { expected: MODEL_SCHEMA_VERSION, found: h.schema_version });
        }
        let names = ["norm_mean", "norm_std", "tokens", "positional", "audio", "text_block", "text_proj"];
        if h.blocks.iter().map(|b| b.name.as_str()).ne(names) {
            return Err(Error::Format("unexpected block layout".into()));
        }
        let mut b = read_blocks(payload, &h.blocks)?.into_iter();
        let mut next = || b.next().expect("block count checked");
        let norm = NormStats { mean: next(), std: next() };
        let tokens = TokenEmbeddingTable { dim: h.dims.token, table: next() };
        let positional = next();
        let mlp = |dims: &[usize], p: Vec<f64>| {
            Mlp::from_params(dims, p).ok_or_else(|| Error::Format("MLP block size does not match its layers".into()))
        };
        let audio = AudioEncoderParams { net: mlp(&h.audio_layers, next())? };
        let block = mlp(&h.text_block_layers, next())?;
        let proj = mlp(&h.text_proj_layers, next())?;
        Ok(Self {
            dims: h.dims,
            tau: h.tau,
            sample_rate: h.sample_rate,
            mel: h.mel,
            norm,
            tokens,
            audio,
            text: TextEncoderParams { token_dim: h.dims.token, positional, block, proj },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// SHA-256 of the serialized checkpoint.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_bytes()?))
    }
}
