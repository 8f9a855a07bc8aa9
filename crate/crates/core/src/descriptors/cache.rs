//! Little-endian binary feature cache.
//!
//! Layout: `FECTFEAT`, version `u16`, modality `u8`, dim `u32`, count `u32`,
//! then `count × dim` `f32` values in row order.

use std::fs;
use std::path::Path;

use crate::descriptors::Modality;
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 8] = b"FECTFEAT";
pub const CACHE_VERSION: u16 = 1;
const HEADER_LEN: usize = 8 + 2 + 1 + 4 + 4;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCache {
    pub modality: Modality,
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureCache {
    pub fn new(modality: Modality, dim: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::shape("feature dim must be positive"));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(Error::shape(format!("row {i} has {} values, expected {dim}", r.len())));
        }
        Ok(Self { modality, dim, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.dim * self.rows.len());
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.push(self.modality.code());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.rows.len() as u32).to_le_bytes());
        for v in self.rows.iter().flatten() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let parse = |offset: usize, message: String| Error::Parse { offset, message };
        if bytes.len() < HEADER_LEN {
            return Err(parse(bytes.len(), "truncated feature cache header".into()));
        }
        if &bytes[..8] != CACHE_MAGIC {
            return Err(parse(0, "not a feature cache (bad magic)".into()));
        }
        let version = u16::from_le_bytes([bytes[8], bytes[9]]);
        if version != CACHE_VERSION {
            return Err(parse(8, format!("unsupported cache version {version}")));
        }
        let modality = Modality::from_code(bytes[10])
            .ok_or_else(|| parse(10, format!("unknown modality code {}", bytes[10])))?;
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
        let dim = word(11);
        let count = word(15);
        if dim == 0 {
            return Err(parse(11, "feature dim must be positive".into()));
        }
        let expected = dim
            .checked_mul(count)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| parse(11, "cache dimensions overflow".into()))?;
        if bytes.len() != expected {
            return Err(parse(
                bytes.len().min(expected),
                format!("expected {expected} bytes for {count}×{dim} values, found {}", bytes.len()),
            ));
        }
        let values: Vec<f64> = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        let rows = values.chunks(dim).map(<[f64]>::to_vec).collect();
        Self::new(modality, dim, rows)
    }
}

pub fn write_feature_cache(path: &Path, cache: &FeatureCache) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, cache.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_feature_cache(path: &Path) -> Result<FeatureCache> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureCache::from_bytes(&bytes)
}
