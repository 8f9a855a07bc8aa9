//! Per-modality z-scoring, weighted concatenation and the fusion-weight grid.

mod grid;

pub use grid::{grid_search_weights, GridResult, GridSpec, HeatmapRow};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::descriptors::Modality;
use crate::error::{Error, Result};
use crate::numkit::Matrix;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-sample features of all three modalities with labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureSet {
    pub cell: Vec<Vec<f64>>,
    pub tissue: Vec<Vec<f64>>,
    pub edge: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn modality(&self, m: Modality) -> &[Vec<f64>] {
        match m {
            Modality::Cell => &self.cell,
            Modality::Tissue => &self.tissue,
            Modality::Edge => &self.edge,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for m in Modality::ALL {
            let rows = self.modality(m);
            if rows.len() != self.labels.len() {
                return Err(Error::shape(format!(
                    "{m} has {} rows for {} labels",
                    rows.len(),
                    self.labels.len()
                )));
            }
            if let Some(first) = rows.first() {
                if rows.iter().any(|r| r.len() != first.len()) {
                    return Err(Error::shape(format!("{m} rows differ in length")));
                }
            }
        }
        Ok(())
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let pick = |rows: &[Vec<f64>]| idx.iter().map(|&i| rows[i].clone()).collect();
        Self {
            cell: pick(&self.cell),
            tissue: pick(&self.tissue),
            edge: pick(&self.edge),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ColumnStats {
    /// Population mean and standard deviation per column, std floored at [`STD_FLOOR`].
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Invalid(format!(
                "normalizer needs at least 2 samples, got {}",
                rows.len()
            )));
        }
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::shape("rows differ in length"));
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let std = var.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::shape(format!("expected dim {}, got {}", self.dim(), row.len())));
        }
        Ok(row
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub cell: ColumnStats,
    pub tissue: ColumnStats,
    pub edge: ColumnStats,
}

impl Normalizer {
    pub fn stats(&self, m: Modality) -> &ColumnStats {
        match m {
            Modality::Cell => &self.cell,
            Modality::Tissue => &self.tissue,
            Modality::Edge => &self.edge,
        }
    }
}

pub fn fit_normalizer(train: &FeatureSet) -> Result<Normalizer> {
    train.validate()?;
    Ok(Normalizer {
        cell: ColumnStats::fit(&train.cell)?,
        tissue: ColumnStats::fit(&train.tissue)?,
        edge: ColumnStats::fit(&train.edge)?,
    })
}

/// Modality weights α (cell), β (tissue), γ (edge).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl FusionWeights {
    pub const UNIT: Self = Self {
        alpha: 1.0,
        beta: 1.0,
        gamma: 1.0,
    };

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let w = Self { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("fusion weight {name} = {v} must be finite and ≥ 0")));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            alpha: self.alpha * c,
            beta: self.beta * c,
            gamma: self.gamma * c,
        }
    }

    fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub weights: FusionWeights,
    pub normalizer: Normalizer,
}

impl FusionConfig {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.weights.validate()?;
        Ok(cfg)
    }

    pub fn fused_dim(&self) -> usize {
        Modality::ALL.iter().map(|m| self.normalizer.stats(*m).dim()).sum()
    }
}

/// `[α·z(X_C), β·z(X_T), γ·z(X_E)]`.
pub fn fuse(xc: &[f64], xt: &[f64], xe: &[f64], config: &FusionConfig) -> Result<Vec<f64>> {
    config.weights.validate()?;
    let mut out = Vec::with_capacity(config.fused_dim());
    for ((m, x), w) in Modality::ALL.iter().zip([xc, xt, xe]).zip(config.weights.as_array()) {
        let z = config
            .normalizer
            .stats(*m)
            .apply(x)
            .map_err(|e| Error::shape(format!("{m} block: {e}")))?;
        out.extend(z.into_iter().map(|v| w * v));
    }
    Ok(out)
}

/// Fused design matrix, one row per sample.
pub fn fuse_set(set: &FeatureSet, config: &FusionConfig) -> Result<Matrix> {
    set.validate()?;
    let rows = (0..set.len())
        .map(|i| fuse(&set.cell[i], &set.tissue[i], &set.edge[i], config))
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, config.fused_dim()));
    }
    Matrix::from_rows(&rows)
}
