//! On-disk `(network, mask)` pairs.
//!
//! A snapshot is a directory with three files:
//!
//! - `manifest.json`: format version, architecture, init spec, run metadata,
//!   per-layer shapes and byte ranges, SHA-256 of both blobs;
//! - `weights.bin`: for each layer in order, the weight tensor then the bias,
//!   as little-endian `f32`;
//! - `masks.bin`: for each prunable layer in order, one byte (0 or 1) per
//!   weight.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{SeedTuple, Stage};
use crate::error::{Error, Result};
use crate::nn::{Architecture, InitSpec, LayerParams, Network};
use crate::pruning::{Mask, MaskLayer, Method};
use crate::tensor::Tensor;
use crate::treatments::Treatment;

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const WEIGHTS: &str = "weights.bin";
const MASKS: &str = "masks.bin";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnapshotMeta {
    pub method: Option<Method>,
    pub treatment: Option<Treatment>,
    pub sparsity: Option<f64>,
    pub seeds: Option<SeedTuple>,
    pub stage: Option<Stage>,
}

/// Byte range within a blob.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub offset: usize,
    pub len: usize,
}

impl Span {
    fn end(self) -> usize {
        self.offset + self.len
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub layer: usize,
    pub weight_shape: Vec<usize>,
    pub weight: Span,
    pub bias: Option<Span>,
    pub mask: Option<Span>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub architecture: Architecture,
    pub init: InitSpec,
    pub meta: SnapshotMeta,
    pub layers: Vec<LayerEntry>,
    pub weights_sha256: String,
    pub masks_sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn push_f32(blob: &mut Vec<u8>, values: &[f32]) -> Span {
    let offset = blob.len();
    for v in values {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    Span { offset, len: blob.len() - offset }
}

pub fn save_snapshot(net: &Network, mask: &Mask, meta: &SnapshotMeta, dir: impl AsRef<Path>) -> Result<()> {
    mask.check_against(net)?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let (mut weights, mut masks) = (Vec::new(), Vec::new());
    let mut layers = Vec::with_capacity(net.params.len());
    for (i, p) in net.params.iter().enumerate() {
        let weight = push_f32(&mut weights, p.weight.data());
        let bias = p.bias.as_ref().map(|b| push_f32(&mut weights, b.data()));
        let mask = mask.layers.iter().find(|m| m.layer == i).map(|m| {
            let offset = masks.len();
            masks.extend_from_slice(&m.bits);
            Span { offset, len: m.bits.len() }
        });
        layers.push(LayerEntry {
            layer: i,
            weight_shape: p.weight.shape().to_vec(),
            weight,
            bias,
            mask,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        architecture: net.arch.clone(),
        init: net.init,
        meta: meta.clone(),
        layers,
        weights_sha256: sha256_hex(&weights),
        masks_sha256: sha256_hex(&masks),
    };
    fs::write(dir.join(WEIGHTS), &weights)?;
    fs::write(dir.join(MASKS), &masks)?;
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Checks that `spans` tile `[0, blob.len())` in order, then the checksum.
fn check_blob(name: &str, blob: &[u8], spans: &[Span], sha: &str) -> Result<()> {
    let mut pos = 0;
    for s in spans {
        if s.offset != pos {
            return Err(Error::Manifest(format!("{name}: span at {} leaves a gap or overlap at {pos}", s.offset)));
        }
        pos = s.end();
    }
    if blob.len() < pos {
        return Err(Error::TruncatedBlob {
            blob: name.to_string(),
            needed: pos,
            actual: blob.len(),
        });
    }
    if blob.len() > pos {
        return Err(Error::Manifest(format!("{name}: {} trailing bytes", blob.len() - pos)));
    }
    if sha256_hex(blob) != sha {
        return Err(Error::ChecksumMismatch { blob: name.to_string() });
    }
    Ok(())
}

fn read_f32(blob: &[u8], span: Span) -> Result<Vec<f32>> {
    if !span.len.is_multiple_of(4) {
        return Err(Error::Manifest(format!("span of {} bytes is not a whole number of f32", span.len)));
    }
    Ok(blob[span.offset..span.end()]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn load_snapshot(dir: impl AsRef<Path>) -> Result<(Network, Mask, SnapshotMeta)> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let weights = fs::read(dir.join(WEIGHTS))?;
    let masks = fs::read(dir.join(MASKS))?;
    let weight_spans: Vec<Span> = manifest
        .layers
        .iter()
        .flat_map(|l| std::iter::once(l.weight).chain(l.bias))
        .collect();
    let mask_spans: Vec<Span> = manifest.layers.iter().filter_map(|l| l.mask).collect();
    check_blob(WEIGHTS, &weights, &weight_spans, &manifest.weights_sha256)?;
    check_blob(MASKS, &masks, &mask_spans, &manifest.masks_sha256)?;

    let mut params = Vec::with_capacity(manifest.layers.len());
    let mut mask_layers = Vec::new();
    for (i, entry) in manifest.layers.iter().enumerate() {
        if entry.layer != i {
            return Err(Error::Manifest(format!("layer entry {i} is labelled {}", entry.layer)));
        }
        let weight = Tensor::new(entry.weight_shape.clone(), read_f32(&weights, entry.weight)?)?;
        let bias = entry.bias.map(|s| read_f32(&weights, s).map(Tensor::from_vec)).transpose()?;
        params.push(LayerParams { weight, bias });
        if let Some(s) = entry.mask {
            mask_layers.push(MaskLayer {
                layer: i,
                shape: entry.weight_shape.clone(),
                bits: masks[s.offset..s.end()].to_vec(),
            });
        }
    }
    let net = Network::from_params(&manifest.architecture, manifest.init, params)?;
    let mask = Mask::new(mask_layers)?;
    mask.check_against(&net)?;
    Ok((net, mask, manifest.meta))
}

/// Reads just the manifest (for tests and tooling).
pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.as_ref().join(MANIFEST))?)?)
}

/// Overwrites the manifest (for tests and tooling).
pub fn write_manifest(dir: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    fs::write(dir.as_ref().join(MANIFEST), serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}
