//! Checkpoint format.
//!
//! `model.ckpt` is an 8-byte little-endian header length, a JSON header
//! (`metadata` plus one entry per tensor with name, shape, dtype, byte offset
//! and byte length) and the tensors as little-endian f64. The architecture
//! lives next to it in `arch.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::autograd::{ParamSet, Tensor};
use super::{ArchConfig, EpochLoss, QcNet, SegNet, TrainedModel};
use crate::error::{Error, Result};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const ARCH_FILE: &str = "arch.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Metadata {
    seed: u64,
    checksum: String,
    loss_history: Vec<EpochLoss>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: usize,
    length: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    metadata: Metadata,
    tensors: Vec<TensorEntry>,
}

pub fn to_bytes(model: &TrainedModel) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut offset = 0;
    for (name, t) in model.params.iter() {
        let length = t.len() * 8;
        tensors.push(TensorEntry { name: name.to_owned(), shape: t.shape.clone(), dtype: "f64".into(), offset, length });
        offset += length;
    }
    let header = Header {
        metadata: Metadata {
            seed: model.seed,
            checksum: model.checksum.clone(),
            loss_history: model.loss_history.clone(),
        },
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + json.len() + offset);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in model.params.iter() {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn bad(reason: impl Into<String>) -> Error {
    Error::format("checkpoint", reason)
}

pub fn from_bytes(arch: &ArchConfig, bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < 8 {
        return Err(bad("truncated header length"));
    }
    let hlen = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let body_start = 8usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[8..body_start])?;
    let body = &bytes[body_start..];

    let mut params: ParamSet = match arch {
        ArchConfig::Seg(c) => SegNet::layout(c)?.1,
        ArchConfig::Qc(c) => QcNet::layout(c)?.1,
    };
    if header.tensors.len() != params.len() {
        return Err(bad(format!("{} tensors, architecture has {}", header.tensors.len(), params.len())));
    }
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_owned()).collect();
    for ((entry, name), slot) in header.tensors.iter().zip(&names).zip(params.tensors_mut()) {
        if &entry.name != name || entry.shape != slot.shape || entry.dtype != "f64" {
            return Err(bad(format!("tensor {} does not match the architecture's {name}", entry.name)));
        }
        let end = entry.offset.checked_add(entry.length).filter(|&e| e <= body.len());
        let end = end.ok_or_else(|| bad(format!("tensor {} runs past the end of the file", entry.name)))?;
        if entry.length != slot.len() * 8 {
            return Err(bad(format!("tensor {} has {} bytes", entry.name, entry.length)));
        }
        let data = body[entry.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        *slot = Tensor::new(entry.shape.clone(), data);
    }
    let found = params.checksum();
    if found != header.metadata.checksum {
        return Err(Error::Checksum { path: CHECKPOINT_FILE.into(), expected: header.metadata.checksum, found });
    }
    Ok(TrainedModel {
        arch: arch.clone(),
        params,
        loss_history: header.metadata.loss_history,
        seed: header.metadata.seed,
        checksum: found,
    })
}

pub fn save(model: &TrainedModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join(ARCH_FILE);
    fs::write(&p, serde_json::to_string_pretty(&model.arch)?).map_err(|e| Error::io(&p, e))?;
    let p = dir.join(CHECKPOINT_FILE);
    fs::write(&p, to_bytes(model)?).map_err(|e| Error::io(&p, e))
}

pub fn load(dir: &Path) -> Result<TrainedModel> {
    let p = dir.join(ARCH_FILE);
    let arch: ArchConfig = serde_json::from_slice(&fs::read(&p).map_err(|e| Error::io(&p, e))?)?;
    let p = dir.join(CHECKPOINT_FILE);
    let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
    from_bytes(&arch, &bytes).map_err(|e| match e {
        Error::Checksum { expected, found, .. } => Error::Checksum { path: p, expected, found },
        other => other,
    })
}
