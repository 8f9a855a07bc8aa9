use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::imaging::{Grid, Mask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    pub fn from_count(n: u8) -> Option<Self> {
        match n {
            4 => Some(Connectivity::Four),
            8 => Some(Connectivity::Eight),
            _ => None,
        }
    }

    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            Connectivity::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

/// Component label map: 0 is background, components are `1..=count` in
/// raster order of their first pixel.
#[derive(Clone, Debug)]
pub struct Labeling {
    pub labels: Grid<u32>,
    pub count: usize,
}

impl Labeling {
    /// Pixel area of every component, indexed by `label - 1`.
    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0; self.count];
        for &l in self.labels.as_slice() {
            if l > 0 {
                areas[l as usize - 1] += 1;
            }
        }
        areas
    }
}

pub fn connected_components(mask: &Mask, connectivity: Connectivity) -> Labeling {
    let (rows, cols) = mask.dims();
    let mut labels = Grid::filled(rows, cols, 0u32);
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    for r in 0..rows {
        for c in 0..cols {
            if !*mask.get(r, c) || *labels.get(r, c) != 0 {
                continue;
            }
            count += 1;
            labels.set(r, c, count);
            queue.push_back((r, c));
            while let Some((pr, pc)) = queue.pop_front() {
                for (dr, dc) in connectivity.offsets() {
                    let (nr, nc) = (pr as i64 + dr, pc as i64 + dc);
                    if mask.get_signed(nr, nc) == Some(&true)
                        && *labels.get(nr as usize, nc as usize) == 0
                    {
                        labels.set(nr as usize, nc as usize, count);
                        queue.push_back((nr as usize, nc as usize));
                    }
                }
            }
        }
    }
    Labeling {
        labels,
        count: count as usize,
    }
}

/// Binary mask of a single component.
pub fn component_mask(labeling: &Labeling, label: u32) -> Mask {
    labeling.labels.map(|l| *l == label)
}
