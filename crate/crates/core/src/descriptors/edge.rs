use crate::descriptors::{ExtractorSpec, FeatureVector, Modality, WindowDescriptor};
use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::numkit::{Matrix, SeededRng};

pub const EDGE_PATCH: usize = 64;
pub const EDGE_DIM: usize = 32;
/// Default projection seed.
pub const EDGE_SEED: u64 = 0x5EED_ED6E;

/// Fixed seeded linear map from a flattened patch to `dim` values:
/// `y = P · x / 255` with `P` entries drawn N(0, 1) and scaled by `1/√(patch²)`.
#[derive(Clone, Debug)]
pub struct PatchEmbedder {
    spec: ExtractorSpec,
    projection: Matrix,
}

impl Default for PatchEmbedder {
    fn default() -> Self {
        Self::new(EDGE_PATCH, EDGE_DIM, EDGE_SEED).expect("default sizes are positive")
    }
}

impl PatchEmbedder {
    pub fn new(patch: usize, dim: usize, seed: u64) -> Result<Self> {
        if patch == 0 || dim == 0 {
            return Err(Error::Invalid("patch size and embedding dim must be positive".into()));
        }
        let n = patch * patch;
        let scale = 1.0 / (n as f64).sqrt();
        let mut rng = SeededRng::new(seed);
        let data = (0..dim * n).map(|_| rng.gaussian() * scale).collect();
        Ok(Self {
            spec: ExtractorSpec {
                kind: "random-projection".into(),
                window: patch,
                output_dim: dim,
                seed: Some(seed),
            },
            projection: Matrix::new(dim, n, data)?,
        })
    }

    pub fn projection(&self) -> &Matrix {
        &self.projection
    }

    /// Applies `P` to an already-scaled flattened patch.
    pub fn embed_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.projection.cols() {
            return Err(Error::shape(format!(
                "expected {} values, got {}",
                self.projection.cols(),
                x.len()
            )));
        }
        self.projection.mul_vec(x)
    }

    pub fn embed(&self, patch: &GrayImage) -> Result<FeatureVector> {
        FeatureVector::new(Modality::Edge, self.describe(patch)?)
    }
}

impl WindowDescriptor for PatchEmbedder {
    fn spec(&self) -> &ExtractorSpec {
        &self.spec
    }

    fn describe(&self, window: &GrayImage) -> Result<Vec<f64>> {
        self.check_window(window)?;
        let x: Vec<f64> = window.as_slice().iter().map(|v| f64::from(*v) / 255.0).collect();
        self.embed_values(&x)
    }
}

/// Embeds with the default 64×64 → 32 projection.
pub fn embed_patch(patch: &GrayImage) -> Result<FeatureVector> {
    PatchEmbedder::default().embed(patch)
}
