use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{parse_mask, parse_netpbm, ImageSample, Pixel};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image_path: String,
    pub mask_path: String,
    pub centroids_path: String,
    pub label: usize,
}

/// Dataset listing. Serialized as a bare JSON array; relative paths resolve
/// against `base_dir`, the directory holding the manifest file.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: PathBuf) -> Self {
        Self { entries, base_dir }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<ManifestEntry> = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Data(format!(
                    "{}: duplicate sample id '{}'",
                    path.display(),
                    e.id
                )));
            }
        }
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { entries, base_dir })
    }

    /// Writes the manifest; entry paths are rewritten relative to the new location
    /// when it shares a directory prefix with `base_dir`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let target_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let entries: Vec<ManifestEntry> = self
            .entries
            .iter()
            .map(|e| {
                let mut e = e.clone();
                if target_dir != self.base_dir {
                    e.image_path = relocate(&self.base_dir, &target_dir, &e.image_path);
                    e.mask_path = relocate(&self.base_dir, &target_dir, &e.mask_path);
                    e.centroids_path = relocate(&self.base_dir, &target_dir, &e.centroids_path);
                }
                e
            })
            .collect();
        let mut text = serde_json::to_string_pretty(&entries)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn num_classes(&self) -> usize {
        self.entries.iter().map(|e| e.label + 1).max().unwrap_or(0)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn ids(&self) -> HashSet<&str> {
        self.entries.iter().map(|e| e.id.as_str()).collect()
    }

    fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    pub fn load_sample(&self, index: usize) -> Result<ImageSample> {
        let e = &self.entries[index];
        let read = |rel: &str| {
            let p = self.resolve(rel);
            fs::read(&p).map_err(|err| Error::io(p, err))
        };
        let image = parse_netpbm(&read(&e.image_path)?)?;
        let mask = parse_mask(&read(&e.mask_path)?)?;
        let centroids = parse_centroids(&String::from_utf8_lossy(&read(&e.centroids_path)?))
            .map_err(|err| Error::Data(format!("{}: {err}", e.centroids_path)))?;
        ImageSample::new(e.id.clone(), image, mask, centroids, e.label)
    }
}

fn relocate(from: &Path, to: &Path, rel: &str) -> String {
    let abs = from.join(rel);
    match abs.strip_prefix(to) {
        Ok(p) => p.to_string_lossy().into_owned(),
        Err(_) => abs.to_string_lossy().into_owned(),
    }
}

/// Parses `row,col` lines; blank lines are skipped.
pub fn parse_centroids(text: &str) -> Result<Vec<Pixel>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let mut parts = line.split(',').map(str::trim);
            let parse = |p: Option<&str>| -> Result<usize> {
                p.and_then(|v| v.parse().ok()).ok_or_else(|| {
                    Error::Data(format!("line {}: expected 'row,col', got '{line}'", i + 1))
                })
            };
            let r = parse(parts.next())?;
            let c = parse(parts.next())?;
            Ok((r, c))
        })
        .collect()
}
