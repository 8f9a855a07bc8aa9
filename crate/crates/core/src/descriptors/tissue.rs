use crate::descriptors::{FeatureVector, Modality};
use crate::error::{Error, Result};
use crate::imaging::{connected_components, trace_labeled_contour, Connectivity, GrayImage, Mask};

pub const TISSUE_DIM: usize = 27;
const BINS: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct TissueDescriptor {
    pub features: FeatureVector,
    /// Set when the mask is empty; `features` is then all zeros.
    pub degenerate: bool,
}

/// Whole-image descriptor over the epithelial mask.
///
/// Layout: 16-bin histogram of foreground intensities, foreground fraction,
/// component count, mean component area, total perimeter over area, then the
/// seven Hu invariants of the mask.
pub fn extract_tissue_descriptor(image: &GrayImage, mask: &Mask) -> Result<TissueDescriptor> {
    if image.dims() != mask.dims() {
        return Err(Error::shape(format!(
            "image {:?} and mask {:?} differ in size",
            image.dims(),
            mask.dims()
        )));
    }
    let area = mask.count();
    if area == 0 {
        return Ok(TissueDescriptor {
            features: FeatureVector::zeros(Modality::Tissue, TISSUE_DIM),
            degenerate: true,
        });
    }
    let mut out = Vec::with_capacity(TISSUE_DIM);

    let mut hist = [0.0; BINS];
    for (v, m) in image.as_slice().iter().zip(mask.as_slice()) {
        if *m {
            hist[usize::from(*v) * BINS / 256] += 1.0;
        }
    }
    out.extend(hist.iter().map(|h| h / area as f64));

    let labeling = connected_components(mask, Connectivity::Eight);
    let perimeter: f64 = (1..=labeling.count as u32)
        .map(|label| trace_labeled_contour(&labeling.labels, label).map(|c| c.perimeter))
        .sum::<Result<f64>>()?;
    out.push(area as f64 / (mask.rows() * mask.cols()) as f64);
    out.push(labeling.count as f64);
    out.push(area as f64 / labeling.count as f64);
    out.push(perimeter / area as f64);
    out.extend(hu_moments(mask));

    Ok(TissueDescriptor {
        features: FeatureVector::new(Modality::Tissue, out)?,
        degenerate: false,
    })
}

/// The seven Hu invariants of a binary mask, from scale-normalized central
/// moments. All zeros for an empty mask.
pub fn hu_moments(mask: &Mask) -> [f64; 7] {
    let pts: Vec<(f64, f64)> = (0..mask.rows())
        .flat_map(|r| (0..mask.cols()).map(move |c| (r, c)))
        .filter(|&(r, c)| *mask.get(r, c))
        .map(|(r, c)| (c as f64, r as f64))
        .collect();
    if pts.is_empty() {
        return [0.0; 7];
    }
    let m00 = pts.len() as f64;
    let xbar = pts.iter().map(|p| p.0).sum::<f64>() / m00;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / m00;
    let eta = |p: i32, q: i32| {
        let mu: f64 = pts
            .iter()
            .map(|(x, y)| (x - xbar).powi(p) * (y - ybar).powi(q))
            .sum();
        mu / m00.powf(1.0 + f64::from(p + q) / 2.0)
    };
    let (n20, n02, n11) = (eta(2, 0), eta(0, 2), eta(1, 1));
    let (n30, n03, n21, n12) = (eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2));
    let a = n30 + n12;
    let b = n21 + n03;
    [
        n20 + n02,
        (n20 - n02).powi(2) + 4.0 * n11 * n11,
        (n30 - 3.0 * n12).powi(2) + (3.0 * n21 - n03).powi(2),
        a * a + b * b,
        (n30 - 3.0 * n12) * a * (a * a - 3.0 * b * b) + (3.0 * n21 - n03) * b * (3.0 * a * a - b * b),
        (n20 - n02) * (a * a - b * b) + 4.0 * n11 * a * b,
        (3.0 * n21 - n03) * a * (a * a - 3.0 * b * b) - (n30 - 3.0 * n12) * b * (3.0 * a * a - b * b),
    ]
}
