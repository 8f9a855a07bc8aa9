//! Deterministic synthetic histology-like dataset.
//!
//! Each class is a recipe over four morphological axes: nucleus density,
//! boundary roughness of the epithelial regions, a ring of dark border cells
//! just outside the region boundary, and the number of regions.

mod draw;
mod manifest;
mod split;

pub use draw::{render_sample, RenderedSample};
pub use manifest::{Manifest, ManifestEntry};
pub use split::{split_dataset, Splits};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::encode_pgm;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    /// Nuclei per 1000 px² of epithelial area.
    pub cell_density: f64,
    /// Peak radial deviation of region boundaries, in pixels.
    pub boundary_roughness: f64,
    pub border_ring: bool,
    pub region_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRecipe {
    pub classes: Vec<ClassSpec>,
    pub image_size: usize,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl Default for SyntheticRecipe {
    /// Four classes: normal-like, benign-like, in-situ-like, invasive-like.
    fn default() -> Self {
        let class = |name: &str, density, roughness, ring, regions| ClassSpec {
            name: name.to_string(),
            cell_density: density,
            boundary_roughness: roughness,
            border_ring: ring,
            region_count: regions,
        };
        Self {
            classes: vec![
                class("normal", 1.5, 1.0, false, 3),
                class("benign", 3.0, 2.0, false, 2),
                class("in-situ", 4.5, 1.0, true, 1),
                class("invasive", 4.5, 8.0, false, 1),
            ],
            image_size: 512,
            samples_per_class: 88,
            seed: 20240601,
        }
    }
}

impl SyntheticRecipe {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 128 {
            return Err(Error::Invalid(format!(
                "image_size {} is below the minimum of 128",
                self.image_size
            )));
        }
        if self.classes.is_empty() {
            return Err(Error::Invalid("recipe has no classes".into()));
        }
        for c in &self.classes {
            if !(c.cell_density >= 0.0 && c.cell_density.is_finite()) {
                return Err(Error::Invalid(format!("class '{}': negative cell density", c.name)));
            }
            if !(c.boundary_roughness >= 0.0 && c.boundary_roughness.is_finite()) {
                return Err(Error::Invalid(format!("class '{}': negative roughness", c.name)));
            }
            if c.region_count == 0 {
                return Err(Error::Invalid(format!("class '{}': region_count must be ≥ 1", c.name)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let recipe: SyntheticRecipe = serde_json::from_str(text)?;
        recipe.validate()?;
        Ok(recipe)
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Renders every sample and writes images, masks, centroid CSVs and
/// `manifest.json` under `out_dir`.
pub fn generate_dataset(recipe: &SyntheticRecipe, out_dir: &Path) -> Result<Manifest> {
    recipe.validate()?;
    let mut entries = Vec::new();
    if recipe.samples_per_class > 0 {
        for sub in ["images", "masks", "centroids"] {
            let dir = out_dir.join(sub);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
    } else {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    }
    for (label, class) in recipe.classes.iter().enumerate() {
        for idx in 0..recipe.samples_per_class {
            let sample = render_sample(recipe, label, idx);
            let id = format!("{}-{idx:04}", class.name);
            let entry = ManifestEntry {
                image_path: format!("images/{id}.pgm"),
                mask_path: format!("masks/{id}.pgm"),
                centroids_path: format!("centroids/{id}.csv"),
                id,
                label,
            };
            write_file(&out_dir.join(&entry.image_path), &encode_pgm(&sample.image))?;
            write_file(
                &out_dir.join(&entry.mask_path),
                &encode_pgm(&sample.mask.map(|m| if *m { 255u8 } else { 0 })),
            )?;
            let csv: String = sample
                .centroids
                .iter()
                .map(|(r, c)| format!("{r},{c}\n"))
                .collect();
            write_file(&out_dir.join(&entry.centroids_path), csv.as_bytes())?;
            entries.push(entry);
        }
    }
    let manifest = Manifest::new(entries, out_dir.to_path_buf());
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
