//! Fixed, deterministic feature extractors.
//!
//! Token-level extractors implement [`WindowDescriptor`]: they map a square
//! gray window to a fixed-length vector. The tissue descriptor works on the
//! whole image and mask instead.

mod cache;
mod cell;
mod edge;
mod tissue;

pub use cache::{read_feature_cache, write_feature_cache, FeatureCache, CACHE_MAGIC, CACHE_VERSION};
pub use cell::{extract_cell_descriptor, CellDescriptor, CELL_DIM, CELL_WINDOW};
pub use edge::{embed_patch, PatchEmbedder, EDGE_DIM, EDGE_PATCH, EDGE_SEED};
pub use tissue::{extract_tissue_descriptor, hu_moments, TissueDescriptor, TISSUE_DIM};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::GrayImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Cell,
    Tissue,
    Edge,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Cell, Modality::Tissue, Modality::Edge];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Cell => "cell",
            Modality::Tissue => "tissue",
            Modality::Edge => "edge",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(usize::from(code)).copied()
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "modality",
                name: s.to_string(),
                available: "cell, tissue, edge".into(),
            })
    }
}

/// Real feature vector tagged with its modality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub modality: Modality,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(modality: Modality, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::shape("feature vectors must have positive dimension"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite {modality} feature")));
        }
        Ok(Self { modality, values })
    }

    pub fn zeros(modality: Modality, dim: usize) -> Self {
        Self {
            modality,
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Declared contract of an extractor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractorSpec {
    pub kind: String,
    /// Side length of the square window the extractor accepts.
    pub window: usize,
    pub output_dim: usize,
    pub seed: Option<u64>,
}

/// Square-window descriptor producing one token.
pub trait WindowDescriptor: Send + Sync {
    fn spec(&self) -> &ExtractorSpec;

    fn describe(&self, window: &GrayImage) -> Result<Vec<f64>>;

    fn check_window(&self, window: &GrayImage) -> Result<()> {
        let n = self.spec().window;
        if window.dims() != (n, n) {
            return Err(Error::shape(format!(
                "{} expects a {n}x{n} window, got {}x{}",
                self.spec().kind,
                window.rows(),
                window.cols()
            )));
        }
        Ok(())
    }
}
