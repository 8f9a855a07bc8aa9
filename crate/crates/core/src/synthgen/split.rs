use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numkit::SeededRng;
use crate::synthgen::{Manifest, ManifestEntry};

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Manifest,
    pub val: Manifest,
    pub test: Manifest,
}

/// Stratified train/val/test split.
///
/// Per class, `⌊n·train_frac⌋` samples go to train and `⌊n·val_frac⌋` to
/// validation (at least one each for val and test); the rest form the test
/// split. Entries keep their manifest order within each split.
pub fn split_dataset(manifest: &Manifest, train_frac: f64, val_frac: f64, seed: u64) -> Result<Splits> {
    let valid = |f: f64| f > 0.0 && f < 1.0;
    if !valid(train_frac) || !valid(val_frac) || train_frac + val_frac >= 1.0 {
        return Err(Error::Invalid(format!(
            "split fractions must lie in (0,1) with sum < 1, got {train_frac} and {val_frac}"
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        by_class.entry(e.label).or_default().push(i);
    }
    let mut assignment = vec![0u8; manifest.len()];
    for (label, mut members) in by_class {
        let n = members.len();
        if n < 3 {
            return Err(Error::Data(format!(
                "class {label} has {n} samples, fewer than the 3 splits"
            )));
        }
        let mut n_train = (n as f64 * train_frac + 1e-9).floor() as usize;
        let n_val = ((n as f64 * val_frac + 1e-9).floor() as usize).max(1);
        if n_train + n_val >= n {
            n_train = n - n_val - 1;
        }
        let mut rng = SeededRng::derived(seed, label as u64);
        rng.shuffle(&mut members);
        for (rank, idx) in members.into_iter().enumerate() {
            assignment[idx] = if rank < n_train {
                0
            } else if rank < n_train + n_val {
                1
            } else {
                2
            };
        }
    }
    let pick = |which: u8| -> Vec<ManifestEntry> {
        manifest
            .entries
            .iter()
            .zip(&assignment)
            .filter(|(_, a)| **a == which)
            .map(|(e, _)| e.clone())
            .collect()
    };
    let base = manifest.base_dir.clone();
    Ok(Splits {
        train: Manifest::new(pick(0), base.clone()),
        val: Manifest::new(pick(1), base.clone()),
        test: Manifest::new(pick(2), base),
    })
}
