//! Versioned binary container for model parameters and optimizer state.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic[8] | version u32 | header_len u64 | header JSON
//! blob_count u32 | { name_len u32 | name | value_count u64 | (re f64, im f64) * value_count } *
//! ```
//!
//! Blob names are `param.<tensor>`, `adam.m.<tensor>` and `adam.v.<tensor>`.

use super::model::{Model, Params};
use super::optim::{Adam, AdamConfig};
use super::{ModelConfig, C64};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"SPRBCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    optimizer: AdamConfig,
    optimizer_steps: u64,
    step: u64,
    train_seed: u64,
    threads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: Adam,
    /// Number of completed training steps.
    pub step: u64,
    pub train_seed: u64,
    /// Worker threads used for the per-step linear algebra.
    pub threads: usize,
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }
    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }
}

fn put_blob(out: &mut Vec<u8>, name: &str, values: &[C64]) {
    out.extend((name.len() as u32).to_le_bytes());
    out.extend(name.as_bytes());
    out.extend((values.len() as u64).to_le_bytes());
    for v in values {
        out.extend(v.re.to_le_bytes());
        out.extend(v.im.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn new(model: Model, optimizer: AdamConfig, train_seed: u64) -> Self {
        let optimizer = Adam::new(optimizer, &model.params);
        Self {
            model,
            optimizer,
            step: 0,
            train_seed,
            threads: rayon::current_num_threads(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.model.config.clone(),
            optimizer: self.optimizer.config,
            optimizer_steps: self.optimizer.steps,
            step: self.step,
            train_seed: self.train_seed,
            threads: self.threads,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend(CHECKPOINT_MAGIC);
        out.extend(CHECKPOINT_VERSION.to_le_bytes());
        out.extend((json.len() as u64).to_le_bytes());
        out.extend(&json);
        let groups: [(&str, &Params); 3] = [
            ("param", &self.model.params),
            ("adam.m", &self.optimizer.first),
            ("adam.v", &self.optimizer.second),
        ];
        let count: usize = groups.iter().map(|(_, p)| p.named().len()).sum();
        out.extend((count as u32).to_le_bytes());
        for (prefix, params) in groups {
            for (name, values) in params.named() {
                put_blob(&mut out, &format!("{prefix}.{name}"), values);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let err = |r: &str| format_err(path, r);
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8) != Some(&CHECKPOINT_MAGIC[..]) {
            return Err(err("not a checkpoint (bad magic)"));
        }
        let version = r.u32().ok_or_else(|| err("truncated"))?;
        if version != CHECKPOINT_VERSION {
            return Err(err(&format!("unsupported checkpoint version {version}")));
        }
        let hlen = r.u64().ok_or_else(|| err("truncated"))? as usize;
        let hbytes = r.take(hlen).ok_or_else(|| err("truncated header"))?;
        let header: Header =
            serde_json::from_slice(hbytes).map_err(|e| format_err(path, format!("bad header: {e}")))?;
        let count = r.u32().ok_or_else(|| err("truncated"))?;
        let mut blobs: HashMap<String, Vec<C64>> = HashMap::new();
        for _ in 0..count {
            let nlen = r.u32().ok_or_else(|| err("truncated"))? as usize;
            let name = std::str::from_utf8(r.take(nlen).ok_or_else(|| err("truncated"))?)
                .map_err(|_| err("blob name is not UTF-8"))?
                .to_string();
            let n = r.u64().ok_or_else(|| err("truncated"))? as usize;
            if n > bytes.len() / 16 {
                return Err(err("blob length exceeds file size"));
            }
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                let re = r.f64().ok_or_else(|| err("truncated blob"))?;
                let im = r.f64().ok_or_else(|| err("truncated blob"))?;
                values.push(C64::new(re, im));
            }
            blobs.insert(name, values);
        }
        if r.pos != bytes.len() {
            return Err(err("trailing bytes"));
        }

        let mut model = Model::new(header.config.clone()).map_err(|e| format_err(path, e.to_string()))?;
        let mut optimizer = Adam::new(header.optimizer, &model.params);
        optimizer.steps = header.optimizer_steps;
        let targets: [(&str, &mut Params); 3] = [
            ("param", &mut model.params),
            ("adam.m", &mut optimizer.first),
            ("adam.v", &mut optimizer.second),
        ];
        for (prefix, params) in targets {
            for (name, slot) in params.named_mut() {
                let key = format!("{prefix}.{name}");
                let values = blobs.remove(&key).ok_or_else(|| format_err(path, format!("missing blob {key}")))?;
                if values.len() != slot.len() {
                    return Err(format_err(
                        path,
                        format!("blob {key} has {} values, expected {}", values.len(), slot.len()),
                    ));
                }
                *slot = values;
            }
        }
        if let Some(extra) = blobs.keys().next() {
            return Err(format_err(path, format!("unexpected blob {extra}")));
        }
        Ok(Self {
            model,
            optimizer,
            step: header.step,
            train_seed: header.train_seed,
            threads: header.threads,
        })
    }

    /// Writes through a temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
