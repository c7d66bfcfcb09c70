//! Versioned checkpoint archive shared by the codec and the task models.
//!
//! Layout: the magic `SEMC-CKPT-1\n`, a little-endian `u32` header length, a
//! JSON header (`kind`, free-form `config`, tensor table of names and
//! shapes), then every tensor's `f32` values little-endian in table order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAGIC: &[u8; 12] = b"SEMC-CKPT-1\n";

/// Upper bound on a declared header, well above any real config.
const MAX_HEADER: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub kind: String,
    pub config: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    config: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

impl Archive {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind.clone(),
            config: self.config.clone(),
            tensors: self.tensors.iter().map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone() }).collect(),
        };
        for t in &self.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::Checkpoint(format!("tensor {} does not match its shape {:?}", t.name, t.shape)));
            }
        }
        let header = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut out = Vec::with_capacity(MAGIC.len() + 4 + header.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let rest = bytes.strip_prefix(MAGIC.as_slice()).ok_or_else(|| bad("missing SEMC-CKPT-1 magic".into()))?;
        if rest.len() < 4 {
            return Err(bad("truncated header length".into()));
        }
        let header_len = u32::from_le_bytes([rest[0], rest[1], rest[2], rest[3]]) as usize;
        let rest = &rest[4..];
        if header_len > MAX_HEADER || header_len > rest.len() {
            return Err(bad(format!("header length {header_len} exceeds archive")));
        }
        let header: Header =
            serde_json::from_slice(&rest[..header_len]).map_err(|e| bad(format!("header: {e}")))?;
        let mut payload = &rest[header_len..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let numel = entry
                .shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| bad(format!("tensor {} shape overflows", entry.name)))?;
            let nbytes = numel.checked_mul(4).filter(|&n| n <= payload.len()).ok_or_else(|| {
                bad(format!("tensor {} needs {numel} values, archive is truncated", entry.name))
            })?;
            let data = payload[..nbytes]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            payload = &payload[nbytes..];
            tensors.push(NamedTensor { name: entry.name, shape: entry.shape, data });
        }
        if !payload.is_empty() {
            return Err(bad(format!("{} trailing bytes after the last tensor", payload.len())));
        }
        Ok(Self { kind: header.kind, config: header.config, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        Ok(())
    }

    pub fn parse_config<C: serde::de::DeserializeOwned>(&self) -> Result<C> {
        serde_json::from_value(self.config.clone()).map_err(|e| Error::Checkpoint(format!("config: {e}")))
    }

    /// Copies the tensors into `params` in order, checking names and sizes.
    pub fn restore_into(&self, names: &[String], params: Vec<&mut [f32]>) -> Result<()> {
        if self.tensors.len() != params.len() || names.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "archive holds {} tensors, model expects {}",
                self.tensors.len(),
                params.len()
            )));
        }
        for ((t, name), p) in self.tensors.iter().zip(names).zip(params) {
            if &t.name != name || t.data.len() != p.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} ({} values) does not fit slot {name} ({} values)",
                    t.name,
                    t.data.len(),
                    p.len()
                )));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!("tensor {} contains NaN/Inf", t.name)));
            }
            p.copy_from_slice(&t.data);
        }
        Ok(())
    }
}
