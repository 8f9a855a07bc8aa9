use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fusion::FusionWeights;

pub const DEFAULT_SEED: u64 = 20240601;

/// Where `train-svm` takes its fusion weights from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightSource {
    /// `alpha`, `beta`, `gamma` keys.
    Fixed,
    /// The winner recorded by the last grid search.
    Grid,
}

/// Every tunable of the pipeline. Loaded from `key = value` lines; `#` starts
/// a comment and unknown keys are rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub data_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,
    pub seed: Option<u64>,
    pub samples_per_class: Option<usize>,
    pub image_size: Option<usize>,
    pub train_frac: f64,
    pub val_frac: f64,
    pub max_cells: usize,
    pub contour_spacing: f64,
    pub contour_min_points: usize,
    pub contour_max_points: usize,
    pub knn_k: usize,
    pub edge_embed_dim: usize,
    pub pooled_dim: usize,
    pub heads: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub decay_every: usize,
    pub cell_kernel: String,
    pub edge_kernel: String,
    pub landmarks: usize,
    pub pinv_iters: usize,
    pub classifier: String,
    pub svm_c: f64,
    pub svm_tol: f64,
    pub svm_max_iter: usize,
    pub weights: FusionWeights,
    pub weight_source: WeightSource,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            cache_dir: "cache".into(),
            model_dir: "models".into(),
            report_dir: "reports".into(),
            seed: None,
            samples_per_class: None,
            image_size: None,
            train_frac: 0.57,
            val_frac: 0.15,
            max_cells: 256,
            contour_spacing: 16.0,
            contour_min_points: 8,
            contour_max_points: 64,
            knn_k: 5,
            edge_embed_dim: 32,
            pooled_dim: 64,
            heads: 4,
            epochs: 30,
            batch_size: 16,
            lr0: 0.001,
            momentum: 0.9,
            decay_every: 7,
            cell_kernel: "exact".into(),
            edge_kernel: "nystrom".into(),
            landmarks: 32,
            pinv_iters: 6,
            classifier: "svm".into(),
            svm_c: 1.0,
            svm_tol: 1e-3,
            svm_max_iter: 10_000,
            weights: FusionWeights::UNIT,
            weight_source: WeightSource::Fixed,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse '{value}': {e}")))
}

impl PipelineConfig {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "data_dir" => self.data_dir = v.into(),
            "cache_dir" => self.cache_dir = v.into(),
            "model_dir" => self.model_dir = v.into(),
            "report_dir" => self.report_dir = v.into(),
            "seed" => self.seed = Some(parse(key, v)?),
            "samples_per_class" => self.samples_per_class = Some(parse(key, v)?),
            "image_size" => self.image_size = Some(parse(key, v)?),
            "train_frac" => self.train_frac = parse(key, v)?,
            "val_frac" => self.val_frac = parse(key, v)?,
            "max_cells" => self.max_cells = parse(key, v)?,
            "contour_spacing" => self.contour_spacing = parse(key, v)?,
            "contour_min_points" => self.contour_min_points = parse(key, v)?,
            "contour_max_points" => self.contour_max_points = parse(key, v)?,
            "knn_k" => self.knn_k = parse(key, v)?,
            "edge_embed_dim" => self.edge_embed_dim = parse(key, v)?,
            "pooled_dim" => self.pooled_dim = parse(key, v)?,
            "heads" => self.heads = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "lr0" => self.lr0 = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "decay_every" => self.decay_every = parse(key, v)?,
            "cell_kernel" => self.cell_kernel = v.into(),
            "edge_kernel" => self.edge_kernel = v.into(),
            "landmarks" => self.landmarks = parse(key, v)?,
            "pinv_iters" => self.pinv_iters = parse(key, v)?,
            "classifier" => self.classifier = v.into(),
            "svm_c" => self.svm_c = parse(key, v)?,
            "svm_tol" => self.svm_tol = parse(key, v)?,
            "svm_max_iter" => self.svm_max_iter = parse(key, v)?,
            "alpha" => self.weights.alpha = parse(key, v)?,
            "beta" => self.weights.beta = parse(key, v)?,
            "gamma" => self.weights.gamma = parse(key, v)?,
            "weights" => {
                self.weight_source = match v {
                    "fixed" => WeightSource::Fixed,
                    "grid" => WeightSource::Grid,
                    _ => return Err(Error::Config(format!("weights: expected 'fixed' or 'grid', got '{v}'"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.train_frac > 0.0 && self.val_frac > 0.0 && self.train_frac + self.val_frac < 1.0) {
            return fail(format!("bad split fractions {} / {}", self.train_frac, self.val_frac));
        }
        if self.max_cells == 0 {
            return fail("max_cells must be ≥ 1".into());
        }
        if !(self.contour_spacing > 0.0) || self.contour_min_points > self.contour_max_points {
            return fail("contour sampling bounds are inconsistent".into());
        }
        if self.knn_k == 0 || self.edge_embed_dim == 0 {
            return fail("knn_k and edge_embed_dim must be ≥ 1".into());
        }
        if !(self.svm_c > 0.0 && self.svm_tol > 0.0) || self.svm_max_iter == 0 {
            return fail("svm_c, svm_tol and svm_max_iter must be positive".into());
        }
        self.weights.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Resolved configuration, one `key = value` line per field.
    pub fn render(&self) -> String {
        let ws = match self.weight_source {
            WeightSource::Fixed => "fixed",
            WeightSource::Grid => "grid",
        };
        let opt = |v: Option<usize>| v.map_or("default".to_string(), |v| v.to_string());
        [
            format!("data_dir = {}", self.data_dir.display()),
            format!("cache_dir = {}", self.cache_dir.display()),
            format!("model_dir = {}", self.model_dir.display()),
            format!("report_dir = {}", self.report_dir.display()),
            format!("seed = {}", self.seed()),
            format!("samples_per_class = {}", opt(self.samples_per_class)),
            format!("image_size = {}", opt(self.image_size)),
            format!("train_frac = {}", self.train_frac),
            format!("val_frac = {}", self.val_frac),
            format!("max_cells = {}", self.max_cells),
            format!("contour_spacing = {}", self.contour_spacing),
            format!("contour_min_points = {}", self.contour_min_points),
            format!("contour_max_points = {}", self.contour_max_points),
            format!("knn_k = {}", self.knn_k),
            format!("edge_embed_dim = {}", self.edge_embed_dim),
            format!("pooled_dim = {}", self.pooled_dim),
            format!("heads = {}", self.heads),
            format!("epochs = {}", self.epochs),
            format!("batch_size = {}", self.batch_size),
            format!("lr0 = {}", self.lr0),
            format!("momentum = {}", self.momentum),
            format!("decay_every = {}", self.decay_every),
            format!("cell_kernel = {}", self.cell_kernel),
            format!("edge_kernel = {}", self.edge_kernel),
            format!("landmarks = {}", self.landmarks),
            format!("pinv_iters = {}", self.pinv_iters),
            format!("classifier = {}", self.classifier),
            format!("svm_c = {}", self.svm_c),
            format!("svm_tol = {}", self.svm_tol),
            format!("svm_max_iter = {}", self.svm_max_iter),
            format!("alpha = {}", self.weights.alpha),
            format!("beta = {}", self.weights.beta),
            format!("gamma = {}", self.weights.gamma),
            format!("weights = {ws}"),
        ]
        .join("\n")
    }
}
