use crate::descriptors::{ExtractorSpec, FeatureVector, Modality, WindowDescriptor};
use crate::error::Result;
use crate::imaging::{crop_patch, GrayImage, Pixel};

pub const CELL_WINDOW: usize = 32;
pub const CELL_DIM: usize = 14;
const BINS: usize = 8;

/// Intensity histogram, first two moments and the shape moments of the dark
/// (below-mean) pixels of a nucleus window.
///
/// Layout: `[hist₀..hist₇, mean, variance, area, μ20, μ02, μ11]`, with the
/// shape moments normalized by the window area and size².
#[derive(Clone, Debug)]
pub struct CellDescriptor {
    spec: ExtractorSpec,
}

impl Default for CellDescriptor {
    fn default() -> Self {
        Self::new(CELL_WINDOW)
    }
}

impl CellDescriptor {
    pub fn new(window: usize) -> Self {
        Self {
            spec: ExtractorSpec {
                kind: "cell-stats".into(),
                window,
                output_dim: CELL_DIM,
                seed: None,
            },
        }
    }
}

impl WindowDescriptor for CellDescriptor {
    fn spec(&self) -> &ExtractorSpec {
        &self.spec
    }

    fn describe(&self, window: &GrayImage) -> Result<Vec<f64>> {
        self.check_window(window)?;
        let px = window.as_slice();
        let n = px.len() as f64;
        let mut out = vec![0.0; CELL_DIM];

        for v in px {
            out[usize::from(*v) * BINS / 256] += 1.0;
        }
        for h in &mut out[..BINS] {
            *h /= n;
        }
        let mean = px.iter().map(|v| f64::from(*v)).sum::<f64>() / n;
        let var = px.iter().map(|v| (f64::from(*v) - mean).powi(2)).sum::<f64>() / n;
        out[BINS] = mean;
        out[BINS + 1] = var;

        let size = window.rows();
        let dark: Vec<(f64, f64)> = (0..size)
            .flat_map(|r| (0..size).map(move |c| (r, c)))
            .filter(|&(r, c)| f64::from(*window.get(r, c)) < mean)
            .map(|(r, c)| (r as f64, c as f64))
            .collect();
        if !dark.is_empty() {
            let m00 = dark.len() as f64;
            let rbar = dark.iter().map(|p| p.0).sum::<f64>() / m00;
            let cbar = dark.iter().map(|p| p.1).sum::<f64>() / m00;
            let norm = m00 * (size * size) as f64;
            out[BINS + 2] = m00 / n;
            out[BINS + 3] = dark.iter().map(|p| (p.0 - rbar).powi(2)).sum::<f64>() / norm;
            out[BINS + 4] = dark.iter().map(|p| (p.1 - cbar).powi(2)).sum::<f64>() / norm;
            out[BINS + 5] = dark.iter().map(|p| (p.0 - rbar) * (p.1 - cbar)).sum::<f64>() / norm;
        }
        Ok(out)
    }
}

/// Descriptor of the default-size window centered on `centroid`.
pub fn extract_cell_descriptor(image: &GrayImage, centroid: Pixel) -> Result<FeatureVector> {
    let d = CellDescriptor::default();
    let window = crop_patch(image, centroid, d.spec.window);
    FeatureVector::new(Modality::Cell, d.describe(&window)?)
}
