//! Versioned weight container.
//!
//! Layout: the magic bytes `EPSEG1\n`, a little-endian `u32` header length,
//! a UTF-8 JSON header, then every parameter tensor as little-endian `f32`
//! in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::CropConfig;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};
use crate::unet::{param_specs, Network, UNetConfig};

pub const MAGIC: &[u8; 7] = b"EPSEG1\n";
pub const FORMAT_VERSION: u32 = 1;

/// Training provenance stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub val_aiou: f64,
    pub seed: u64,
    /// Crop geometry the network was trained with.
    #[serde(default)]
    pub crop: CropConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: [usize; 4],
    /// Byte offset into the weight blob.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub config: UNetConfig,
    pub tensors: Vec<ManifestEntry>,
    pub meta: CheckpointMeta,
}

/// A network loaded from disk together with its metadata.
#[derive(Debug)]
pub struct Checkpoint {
    pub network: Network<f32>,
    pub meta: CheckpointMeta,
}

fn manifest(config: &UNetConfig) -> Result<Vec<ManifestEntry>> {
    let mut offset = 0;
    Ok(param_specs(config)?
        .into_iter()
        .map(|spec| {
            let e = ManifestEntry {
                name: spec.name,
                shape: spec.shape.to_array(),
                offset,
            };
            offset += 4 * spec.shape.len();
            e
        })
        .collect())
}

pub fn encode_checkpoint(network: &Network<f32>, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        version: FORMAT_VERSION,
        config: network.config().clone(),
        tensors: manifest(network.config())?,
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + json.len() + 4 * network.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in network.params() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |msg: String| Error::Checkpoint(msg);
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(bad("missing EPSEG1 magic bytes".into()));
    }
    let len_at = MAGIC.len();
    let header_len = u32::from_le_bytes(bytes[len_at..len_at + 4].try_into().expect("4 bytes")) as usize;
    let blob_at = len_at + 4 + header_len;
    if bytes.len() < blob_at {
        return Err(bad(format!("header claims {header_len} bytes but the file is truncated")));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[len_at + 4..blob_at])
        .map_err(|e| bad(format!("malformed header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            header.version
        )));
    }
    header.config.validate()?;
    let expected = manifest(&header.config)?;
    if expected.len() != header.tensors.len() {
        return Err(bad(format!(
            "manifest lists {} tensors, configuration needs {}",
            header.tensors.len(),
            expected.len()
        )));
    }
    for (want, got) in expected.iter().zip(&header.tensors) {
        if want != got {
            return Err(bad(format!(
                "manifest entry {} {:?}@{} does not match expected {} {:?}@{}",
                got.name, got.shape, got.offset, want.name, want.shape, want.offset
            )));
        }
    }
    let blob = &bytes[blob_at..];
    let count: usize = expected.iter().map(|e| e.shape.iter().product::<usize>()).sum();
    if blob.len() != 4 * count {
        return Err(bad(format!("weight blob is {} bytes, expected {}", blob.len(), 4 * count)));
    }
    let params = expected
        .iter()
        .map(|e| {
            let shape = Shape::from_slice(&e.shape)?;
            let data = blob[e.offset..e.offset + 4 * shape.len()]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            Tensor::from_vec(shape, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Checkpoint {
        network: Network::from_params(&header.config, params)?,
        meta: header.meta,
    })
}

pub fn save_checkpoint(network: &Network<f32>, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(network, meta)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    decode_checkpoint(&bytes)
}
