// SPDX-License-Identifier: Apache-2.0

//! `CGT1` tensor container.
//!
//! ```text
//! "CGT1" | header_len: u64 LE | header: UTF-8 JSON | payload: f32 LE, row-major
//! ```
//!
//! The header maps every canonical tensor name to
//! `{dtype: "f32", shape, offset, byte_len}` (offsets relative to the payload
//! start) and carries a `metadata` object holding the model config fields
//! plus `step`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelWeights};

pub const MAGIC: &[u8; 4] = b"CGT1";
const METADATA_KEY: &str = "metadata";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub byte_len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Metadata {
    #[serde(flatten)]
    config: ModelConfig,
    step: u64,
}

/// A validated checkpoint read from disk.
#[derive(Debug, Clone)]
pub struct LoadedCheckpoint {
    pub weights: ModelWeights<f32>,
    pub config: ModelConfig,
    pub step: u64,
    /// Tensors holding NaN or infinite values. Loading does not fail on these.
    pub non_finite: Vec<String>,
}

pub fn save_checkpoint(weights: &ModelWeights<f32>, config: &ModelConfig, step: u64, path: &Path) -> Result<()> {
    weights.validate(config)?;
    let tensors = weights.tensors();

    let mut header = Map::new();
    let mut offset = 0u64;
    for (name, t) in &tensors {
        let byte_len = 4 * t.len() as u64;
        let entry = TensorEntry {
            dtype: "f32".into(),
            shape: t.shape().to_vec(),
            offset,
            byte_len,
        };
        header.insert(name.clone(), serde_json::to_value(entry).expect("entry serializes"));
        offset += byte_len;
    }
    let meta = Metadata {
        config: config.clone(),
        step,
    };
    header.insert(METADATA_KEY.into(), serde_json::to_value(meta).expect("metadata serializes"));
    let header = serde_json::to_vec(&Value::Object(header)).map_err(|e| Error::json(path, e))?;

    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    out.write_all(MAGIC).map_err(io)?;
    out.write_all(&(header.len() as u64).to_le_bytes()).map_err(io)?;
    out.write_all(&header).map_err(io)?;
    for (_, t) in &tensors {
        // iter() walks in logical (row-major) order regardless of memory layout
        for v in t.iter() {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::Container {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    if bytes.len() < 12 {
        return Err(bad("file ends inside the header length".into()));
    }
    let header_len = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes"));
    let header_end = 12u64
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len() as u64)
        .ok_or_else(|| bad(format!("header length {header_len} exceeds file size")))? as usize;
    let header: Map<String, Value> = serde_json::from_slice(&bytes[12..header_end]).map_err(|e| Error::json(path, e))?;
    let payload = &bytes[header_end..];

    let mut entries: BTreeMap<String, TensorEntry> = BTreeMap::new();
    let mut metadata = None;
    for (key, value) in header {
        if key == METADATA_KEY {
            metadata = Some(serde_json::from_value::<Metadata>(value).map_err(|e| Error::json(path, e))?);
        } else {
            let entry: TensorEntry = serde_json::from_value(value).map_err(|e| Error::json(path, e))?;
            entries.insert(key, entry);
        }
    }
    let Metadata { config, step } = metadata.ok_or_else(|| bad("header has no metadata".into()))?;
    config.validate()?;

    // layout: dtype, shape/byte_len agreement, strictly increasing and
    // non-overlapping offsets that exactly cover the payload
    let mut by_offset: Vec<(&String, &TensorEntry)> = entries.iter().collect();
    by_offset.sort_by_key(|(_, e)| e.offset);
    let mut cursor = 0u64;
    for (name, e) in &by_offset {
        if e.dtype != "f32" {
            return Err(bad(format!("tensor {name} has dtype {:?}, expected \"f32\"", e.dtype)));
        }
        let elems: u64 = e.shape.iter().map(|&d| d as u64).product();
        if elems * 4 != e.byte_len {
            return Err(bad(format!("tensor {name}: byte_len {} != 4 x {elems}", e.byte_len)));
        }
        if e.offset != cursor {
            return Err(bad(format!("tensor {name}: offset {} leaves a gap or overlap at {cursor}", e.offset)));
        }
        if e.offset + e.byte_len > payload.len() as u64 {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                tensor: (*name).clone(),
            });
        }
        cursor += e.byte_len;
    }
    if cursor != payload.len() as u64 {
        return Err(bad(format!("{} trailing payload bytes", payload.len() as u64 - cursor)));
    }

    let mut weights = ModelWeights::<f32>::zeros(&config);
    let mut non_finite = Vec::new();
    let expected: Vec<String> = weights.tensors().into_iter().map(|(n, _)| n).collect();
    if let Some(extra) = entries.keys().find(|k| !expected.contains(k)) {
        return Err(bad(format!("unexpected tensor {extra}")));
    }
    for (name, mut dst) in weights.tensors_mut() {
        let e = entries.get(&name).ok_or_else(|| bad(format!("missing tensor {name}")))?;
        if e.shape != dst.shape() {
            return Err(Error::Shape {
                name,
                expected: dst.shape().to_vec(),
                found: e.shape.clone(),
            });
        }
        let start = e.offset as usize;
        let raw = &payload[start..start + e.byte_len as usize];
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            non_finite.push(name.clone());
        }
        let src = ArrayD::from_shape_vec(e.shape.clone(), values).expect("length checked above");
        dst.assign(&src);
    }

    Ok(LoadedCheckpoint {
        weights,
        config,
        step,
        non_finite,
    })
}

/// Reads only the header of a container.
pub fn read_header(path: &Path) -> Result<(ModelConfig, u64, BTreeMap<String, TensorEntry>)> {
    use std::io::Read;
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = [0u8; 12];
    f.read_exact(&mut head).map_err(|e| Error::io(path, e))?;
    if &head[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let len = u64::from_le_bytes(head[4..].try_into().expect("8 bytes"));
    let mut buf = vec![0u8; len as usize];
    f.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    let header: Map<String, Value> = serde_json::from_slice(&buf).map_err(|e| Error::json(path, e))?;
    let mut entries = BTreeMap::new();
    let mut meta = None;
    for (k, v) in header {
        if k == METADATA_KEY {
            meta = Some(serde_json::from_value::<Metadata>(v).map_err(|e| Error::json(path, e))?);
        } else {
            entries.insert(k, serde_json::from_value(v).map_err(|e| Error::json(path, e))?);
        }
    }
    let meta = meta.ok_or_else(|| Error::Container {
        path: path.to_path_buf(),
        reason: "header has no metadata".into(),
    })?;
    Ok((meta.config, meta.step, entries))
}
