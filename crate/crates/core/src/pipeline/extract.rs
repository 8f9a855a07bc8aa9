use std::collections::BTreeMap;

use crate::aggregator::{aggregate, AggregatorModel, AttentionKernel};
use crate::descriptors::{
    extract_cell_descriptor, extract_tissue_descriptor, Modality, PatchEmbedder, EDGE_PATCH, EDGE_SEED,
    TISSUE_DIM,
};
use crate::error::{Error, Result};
use crate::fusion::ColumnStats;
use crate::graph::{assemble_edge_feature, build_knn_graph, STATS_DIM};
use crate::imaging::{
    connected_components, crop_patch, trace_labeled_contour, Connectivity, ContourSampler, ImageSample, Pixel,
};
use crate::numkit::{fnv1a, Matrix, SeededRng};
use crate::pipeline::PipelineConfig;

/// Token-level features of one image and where each token sits.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenBag {
    pub tokens: Vec<Vec<f64>>,
    pub positions: Vec<Pixel>,
}

/// A trained aggregator with the token standardization it was trained on.
pub struct TrainedAggregator {
    pub model: AggregatorModel,
    pub kernel: Box<dyn AttentionKernel>,
    pub tokens: ColumnStats,
}

impl TrainedAggregator {
    pub fn standardize(&self, bag: &TokenBag) -> Result<Matrix> {
        let rows = bag
            .tokens
            .iter()
            .map(|t| self.tokens.apply(t))
            .collect::<Result<Vec<_>>>()?;
        Matrix::from_rows(&rows)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Extraction {
    pub values: Vec<f64>,
    /// No usable structure in the image; `values` are zeros.
    pub degenerate: bool,
}

/// Turns one image into one modality's image-level feature.
pub trait ModalityExtractor: Send + Sync {
    fn modality(&self) -> Modality;

    /// Output dimension given the aggregator's pooled dimension.
    fn feature_dim(&self, pooled_dim: usize) -> usize;

    /// Whether [`ModalityExtractor::extract`] needs a trained aggregator.
    fn uses_aggregator(&self) -> bool {
        false
    }

    fn tokens(&self, _sample: &ImageSample) -> Result<TokenBag> {
        Err(Error::Invalid(format!("{} has no token representation", self.modality())))
    }

    fn extract(&self, sample: &ImageSample, aggregator: Option<&TrainedAggregator>) -> Result<Extraction>;
}

fn require(aggregator: Option<&TrainedAggregator>, m: Modality) -> Result<&TrainedAggregator> {
    aggregator.ok_or_else(|| {
        Error::Data(format!("no trained {m} aggregator; run train-aggregator for {m} first"))
    })
}

pub struct CellExtractor {
    pub max_cells: usize,
    pub seed: u64,
}

impl CellExtractor {
    /// Centroids kept for `sample`: all of them, or a seeded subsample of
    /// `max_cells` in original order.
    pub fn select(&self, sample: &ImageSample) -> Vec<Pixel> {
        let all = &sample.centroids;
        if all.len() <= self.max_cells {
            return all.clone();
        }
        let mut rng = SeededRng::derived(self.seed, fnv1a(sample.id.as_bytes()));
        let mut keep = rng.permutation(all.len());
        keep.truncate(self.max_cells);
        keep.sort_unstable();
        keep.into_iter().map(|i| all[i]).collect()
    }
}

impl ModalityExtractor for CellExtractor {
    fn modality(&self) -> Modality {
        Modality::Cell
    }

    fn feature_dim(&self, pooled_dim: usize) -> usize {
        pooled_dim
    }

    fn uses_aggregator(&self) -> bool {
        true
    }

    fn tokens(&self, sample: &ImageSample) -> Result<TokenBag> {
        let gray = sample.image.to_gray();
        let positions = self.select(sample);
        let tokens = positions
            .iter()
            .map(|&c| Ok(extract_cell_descriptor(&gray, c)?.values))
            .collect::<Result<Vec<_>>>()?;
        Ok(TokenBag { tokens, positions })
    }

    fn extract(&self, sample: &ImageSample, aggregator: Option<&TrainedAggregator>) -> Result<Extraction> {
        let agg = require(aggregator, Modality::Cell)?;
        let bag = self.tokens(sample)?;
        if bag.tokens.is_empty() {
            return Ok(Extraction {
                values: vec![0.0; agg.model.dims.pooled_dim],
                degenerate: true,
            });
        }
        let pooled = aggregate(&agg.standardize(&bag)?, &agg.model, agg.kernel.as_ref(), Modality::Cell)?;
        Ok(Extraction {
            values: pooled.values,
            degenerate: false,
        })
    }
}

pub struct TissueExtractor;

impl ModalityExtractor for TissueExtractor {
    fn modality(&self) -> Modality {
        Modality::Tissue
    }

    fn feature_dim(&self, _pooled_dim: usize) -> usize {
        TISSUE_DIM
    }

    fn extract(&self, sample: &ImageSample, _aggregator: Option<&TrainedAggregator>) -> Result<Extraction> {
        let d = extract_tissue_descriptor(&sample.image.to_gray(), &sample.mask)?;
        Ok(Extraction {
            values: d.features.values,
            degenerate: d.degenerate,
        })
    }
}

/// Components, contours, arc-length samples, patches, random-projection
/// embeddings; the pooled embedding is joined with KNN-graph statistics.
pub struct EdgeExtractor {
    pub sampler: ContourSampler,
    pub embedder: PatchEmbedder,
    pub k: usize,
}

impl EdgeExtractor {
    pub fn new(sampler: ContourSampler, embed_dim: usize, k: usize) -> Result<Self> {
        Ok(Self {
            sampler,
            embedder: PatchEmbedder::new(EDGE_PATCH, embed_dim, EDGE_SEED)?,
            k,
        })
    }
}

impl ModalityExtractor for EdgeExtractor {
    fn modality(&self) -> Modality {
        Modality::Edge
    }

    fn feature_dim(&self, pooled_dim: usize) -> usize {
        pooled_dim + STATS_DIM
    }

    fn uses_aggregator(&self) -> bool {
        true
    }

    fn tokens(&self, sample: &ImageSample) -> Result<TokenBag> {
        let gray = sample.image.to_gray();
        let labeling = connected_components(&sample.mask, Connectivity::Eight);
        let mut bag = TokenBag {
            tokens: Vec::new(),
            positions: Vec::new(),
        };
        for label in 1..=labeling.count {
            let contour = trace_labeled_contour(&labeling.labels, label as u32)?;
            for p in self.sampler.sample(&contour) {
                let patch = crop_patch(&gray, p, EDGE_PATCH);
                bag.tokens.push(self.embedder.embed(&patch)?.values);
                bag.positions.push(p);
            }
        }
        Ok(bag)
    }

    fn extract(&self, sample: &ImageSample, aggregator: Option<&TrainedAggregator>) -> Result<Extraction> {
        let agg = require(aggregator, Modality::Edge)?;
        let bag = self.tokens(sample)?;
        if bag.tokens.is_empty() {
            return Ok(Extraction {
                values: vec![0.0; self.feature_dim(agg.model.dims.pooled_dim)],
                degenerate: true,
            });
        }
        let x = agg.standardize(&bag)?;
        let pooled = aggregate(&x, &agg.model, agg.kernel.as_ref(), Modality::Edge)?;
        let points: Vec<(f64, f64)> = bag.positions.iter().map(|&(r, c)| (r as f64, c as f64)).collect();
        let features: Vec<Vec<f64>> = (0..x.rows()).map(|r| x.row(r).to_vec()).collect();
        let graph = build_knn_graph(&points, &features, self.k)?;
        let edge = assemble_edge_feature(&pooled.values, &graph.summary_stats())?;
        Ok(Extraction {
            values: edge.values,
            degenerate: false,
        })
    }
}

type ExtractorFactory = Box<dyn Fn(&PipelineConfig) -> Result<Box<dyn ModalityExtractor>> + Send + Sync>;

/// Modality extractors by name.
pub struct ExtractorRegistry {
    factories: BTreeMap<String, ExtractorFactory>,
}

impl Default for ExtractorRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("cell", |cfg| {
            Ok(Box::new(CellExtractor {
                max_cells: cfg.max_cells,
                seed: cfg.seed(),
            }))
        });
        r.register("tissue", |_| Ok(Box::new(TissueExtractor)));
        r.register("edge", |cfg| {
            let sampler = ContourSampler {
                spacing: cfg.contour_spacing,
                min_points: cfg.contour_min_points,
                max_points: cfg.contour_max_points,
            };
            Ok(Box::new(EdgeExtractor::new(sampler, cfg.edge_embed_dim, cfg.knn_k)?))
        });
        r
    }
}

impl ExtractorRegistry {
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&PipelineConfig) -> Result<Box<dyn ModalityExtractor>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, name: &str, config: &PipelineConfig) -> Result<Box<dyn ModalityExtractor>> {
        let factory = self.factories.get(name).ok_or_else(|| Error::UnknownName {
            kind: "extractor",
            name: name.to_string(),
            available: self.names().join(", "),
        })?;
        factory(config)
    }
}
