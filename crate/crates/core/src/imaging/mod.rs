//! Image and mask ingestion plus mask geometry: connected components,
//! Moore-neighbor contour tracing, arc-length contour sampling and patch cropping.

mod components;
mod contour;
mod netpbm;
mod patch;

pub use components::{component_mask, connected_components, Connectivity, Labeling};
pub use contour::{
    sample_contour_uniform, trace_contour, trace_labeled_contour, Contour, ContourSampler,
};
pub use netpbm::{encode_pgm, encode_ppm, parse_mask, parse_netpbm};
pub use patch::crop_patch;

use crate::error::{Error, Result};

/// Pixel coordinate as `(row, col)`.
pub type Pixel = (usize, usize);

/// Row-major 2-D grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

pub type GrayImage = Grid<u8>;
pub type Mask = Grid<bool>;

impl<T: Clone> Grid<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values cannot fill a {rows}x{cols} grid",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> &T {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    /// Signed lookup; `None` outside the grid.
    pub fn get_signed(&self, r: i64, c: i64) -> Option<&T> {
        if r < 0 || c < 0 || r >= self.rows as i64 || c >= self.cols as i64 {
            None
        } else {
            Some(&self.data[r as usize * self.cols + c as usize])
        }
    }

    pub fn contains(&self, r: i64, c: i64) -> bool {
        r >= 0 && c >= 0 && r < self.rows as i64 && c < self.cols as i64
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Grid<U> {
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }
}

/// Decoded NetPBM raster: one (gray) or three (RGB) interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn from_gray(img: GrayImage) -> Self {
        Self {
            rows: img.rows,
            cols: img.cols,
            channels: 1,
            data: img.data,
        }
    }

    /// Gray plane; RGB uses integer Rec. 601 luma weights.
    pub fn to_gray(&self) -> GrayImage {
        let data = match self.channels {
            1 => self.data.clone(),
            _ => self
                .data
                .chunks_exact(self.channels)
                .map(|px| {
                    let y = 299 * u32::from(px[0]) + 587 * u32::from(px[1]) + 114 * u32::from(px[2]);
                    ((y + 500) / 1000) as u8
                })
                .collect(),
        };
        Grid {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }
}

/// One labeled training/evaluation image with its epithelial mask and nuclei.
#[derive(Clone, Debug)]
pub struct ImageSample {
    pub id: String,
    pub image: Raster,
    pub mask: Mask,
    pub centroids: Vec<Pixel>,
    pub label: usize,
}

impl ImageSample {
    pub fn new(
        id: impl Into<String>,
        image: Raster,
        mask: Mask,
        centroids: Vec<Pixel>,
        label: usize,
    ) -> Result<Self> {
        if (image.rows, image.cols) != mask.dims() {
            return Err(Error::Data(format!(
                "image is {}x{} but mask is {}x{}",
                image.rows,
                image.cols,
                mask.rows(),
                mask.cols()
            )));
        }
        if let Some(c) = centroids
            .iter()
            .find(|(r, c)| *r >= image.rows || *c >= image.cols)
        {
            return Err(Error::Data(format!("centroid {c:?} lies outside the image")));
        }
        Ok(Self {
            id: id.into(),
            image,
            mask,
            centroids,
            label,
        })
    }
}
