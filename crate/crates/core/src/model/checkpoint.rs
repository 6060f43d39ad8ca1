//! Checkpoint container.
//!
//! Layout: the 7-byte magic `TRAJSR1`, a little-endian `u64` header length,
//! a UTF-8 JSON header (config, normalisation statistics, hex grid, training
//! bbox, training log, and a weight manifest of name/shape/byte offset),
//! then the weight payload as little-endian `f64`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, Params};
use crate::degrade::{HexGrid, NormStats};
use crate::error::{Error, Result};
use crate::geo::BBox;

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"TRAJSR1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    /// name -> (shape, row-major values)
    pub weights: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
    pub norm_stats: NormStats,
    pub hexgrid: Option<HexGrid>,
    /// Bounding box of the training targets.
    pub bbox: BBox,
    /// Mean training loss per epoch.
    pub training_log: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    config: ModelConfig,
    norm_stats: NormStats,
    hexgrid: Option<HexGrid>,
    bbox: BBox,
    training_log: Vec<f64>,
    weights: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: usize,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0;
        let mut manifest = Vec::with_capacity(self.weights.len());
        for (name, (shape, data)) in &self.weights {
            manifest.push(ManifestEntry {
                name: name.clone(),
                shape: shape.clone(),
                offset,
            });
            offset += data.len() * 8;
        }
        let header = Header {
            format: String::from_utf8_lossy(CHECKPOINT_MAGIC).into_owned(),
            config: self.config.clone(),
            norm_stats: self.norm_stats,
            hexgrid: self.hexgrid,
            bbox: self.bbox,
            training_log: self.training_log.clone(),
            weights: manifest,
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(15 + header.len() + offset);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, data) in self.weights.values() {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 15 || &bytes[..7] != CHECKPOINT_MAGIC {
            return Err(err("missing TRAJSR1 magic"));
        }
        let hlen = u64::from_le_bytes(bytes[7..15].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(15..).ok_or_else(|| err("truncated"))?;
        if body.len() < hlen {
            return Err(err("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        let payload = &body[hlen..];
        let mut weights = BTreeMap::new();
        let mut expected_len = 0;
        for entry in header.weights {
            let n: usize = entry.shape.iter().product();
            let end = entry.offset + n * 8;
            let raw = payload
                .get(entry.offset..end)
                .ok_or_else(|| Error::Checkpoint(format!("weight {} out of bounds", entry.name)))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            expected_len = expected_len.max(end);
            weights.insert(entry.name, (entry.shape, data));
        }
        if payload.len() != expected_len {
            return Err(err("payload length does not match manifest"));
        }
        let ckpt = Checkpoint {
            config: header.config,
            weights,
            norm_stats: header.norm_stats,
            hexgrid: header.hexgrid,
            bbox: header.bbox,
            training_log: header.training_log,
        };
        ckpt.config.validate()?;
        // manifest check against the architecture
        Params::from_weights(&ckpt.config, &ckpt.weights, false)?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Inference model with frozen weights.
    pub fn model(&self) -> Result<Model> {
        let params = Params::from_weights(&self.config, &self.weights, false)?;
        Ok(Model::new(self.config.clone(), params))
    }
}
