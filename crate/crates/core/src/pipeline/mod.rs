//! End-to-end orchestration: every stage reads and writes declared files
//! under the configured data, cache, model and report directories.

mod config;
mod extract;

pub use config::{PipelineConfig, WeightSource, DEFAULT_SEED};
pub use extract::{
    CellExtractor, EdgeExtractor, ExtractorRegistry, Extraction, ModalityExtractor, TissueExtractor,
    TokenBag, TrainedAggregator,
};

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregator::{
    train_aggregator, AggregatorModel, Bag, InitScheme, KernelOptions, KernelRegistry, TrainConfig, TrainTrace,
};
use crate::descriptors::{read_feature_cache, write_feature_cache, FeatureCache, Modality};
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, confusion_matrix, run_ablation, AblationTable, ConfusionMatrix, MetricsReport};
use crate::fusion::{
    fit_normalizer, fuse_set, grid_search_weights, ColumnStats, FeatureSet, FusionConfig, GridResult, GridSpec,
};
use crate::numkit::{pca_project, Matrix};
use crate::svm::{train_multiclass, Classifier, ClassifierRegistry, SvmEnsemble, SvmParams};
use crate::synthgen::{generate_dataset, split_dataset, Manifest, SyntheticRecipe};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SPLITS_FILE: &str = "splits.json";
pub const SVM_FILE: &str = "svm.model";
pub const FUSION_FILE: &str = "fusion.json";
pub const GRID_BEST_FILE: &str = "grid_best.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub fn name(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            _ => Err(Error::UnknownName {
                kind: "split",
                name: s.to_string(),
                available: "train, val, test".into(),
            }),
        }
    }
}

/// Sample ids per split, as stored in `splits.json`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitIds {
    pub fn get(&self, which: SplitName) -> &[String] {
        match which {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }

    /// Rejects ids listed in two splits or absent from the manifest.
    pub fn validate(&self, manifest: &Manifest) -> Result<()> {
        let known = manifest.ids();
        let mut seen: HashMap<&str, &str> = HashMap::new();
        for which in [SplitName::Train, SplitName::Val, SplitName::Test] {
            for id in self.get(which) {
                if !known.contains(id.as_str()) {
                    return Err(Error::Data(format!("split {} lists unknown sample '{id}'", which.name())));
                }
                if let Some(prev) = seen.insert(id, which.name()) {
                    return Err(Error::Data(format!(
                        "split leakage: sample '{id}' is in both {prev} and {}",
                        which.name()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// What `evaluate` produced.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub metrics: MetricsReport,
    pub confusion: ConfusionMatrix,
    pub predictions: Vec<usize>,
    pub reports: Vec<PathBuf>,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub extractors: ExtractorRegistry,
    pub kernels: KernelRegistry,
    pub classifiers: ClassifierRegistry,
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn metrics_csv(m: &MetricsReport) -> String {
    let mut out = String::from("metric,value\n");
    for (name, v) in [
        ("accuracy", m.accuracy),
        ("balanced_accuracy", m.balanced_accuracy),
        ("macro_f1", m.macro_f1),
        ("weighted_f1", m.weighted_f1),
    ] {
        let _ = writeln!(out, "{name},{v:.6}");
    }
    for (k, f) in m.f1.iter().enumerate() {
        let _ = writeln!(out, "f1_class_{k},{f:.6}");
    }
    out
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        log::info!("resolved configuration:\n{}", config.render());
        Ok(Self {
            config,
            extractors: ExtractorRegistry::default(),
            kernels: KernelRegistry::default(),
            classifiers: ClassifierRegistry::default(),
        })
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.config.data_dir.join(MANIFEST_FILE)
    }

    pub fn cache_path(&self, m: Modality) -> PathBuf {
        self.config.cache_dir.join(format!("{}.feat", m.name()))
    }

    pub fn aggregator_path(&self, m: Modality) -> PathBuf {
        self.config.model_dir.join(format!("{}.agg", m.name()))
    }

    pub fn token_stats_path(&self, m: Modality) -> PathBuf {
        self.config.model_dir.join(format!("{}.tokens.json", m.name()))
    }

    pub fn report_path(&self, name: &str) -> PathBuf {
        self.config.report_dir.join(name)
    }

    fn svm_params(&self) -> SvmParams {
        SvmParams {
            c: self.config.svm_c,
            tol: self.config.svm_tol,
            max_iter: self.config.svm_max_iter,
        }
    }

    fn classifier(&self) -> Result<Box<dyn Classifier>> {
        self.classifiers.create(&self.config.classifier, &self.svm_params())
    }

    fn kernel_for(&self, m: Modality) -> Result<Box<dyn crate::aggregator::AttentionKernel>> {
        let name = match m {
            Modality::Edge => &self.config.edge_kernel,
            _ => &self.config.cell_kernel,
        };
        let options = KernelOptions {
            landmarks: self.config.landmarks,
            pinv_iters: self.config.pinv_iters,
            ..KernelOptions::default()
        };
        self.kernels.create(name, &options)
    }

    fn extractor(&self, m: Modality) -> Result<Box<dyn ModalityExtractor>> {
        self.extractors.create(m.name(), &self.config)
    }

    /// Renders the synthetic dataset and its stratified split.
    pub fn generate(&self, recipe: Option<&Path>) -> Result<PathBuf> {
        let mut recipe = match recipe {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                SyntheticRecipe::from_json(&text).map_err(|e| Error::Data(format!("{}: {e}", p.display())))?
            }
            None => SyntheticRecipe::default(),
        };
        if let Some(seed) = self.config.seed {
            recipe.seed = seed;
        }
        if let Some(n) = self.config.samples_per_class {
            recipe.samples_per_class = n;
        }
        if let Some(s) = self.config.image_size {
            recipe.image_size = s;
        }
        recipe.validate()?;
        let dir = &self.config.data_dir;
        let manifest = generate_dataset(&recipe, dir)?;
        if !manifest.is_empty() {
            let splits = split_dataset(&manifest, self.config.train_frac, self.config.val_frac, recipe.seed)?;
            let ids = |m: &Manifest| m.entries.iter().map(|e| e.id.clone()).collect::<Vec<_>>();
            let split_ids = SplitIds {
                train: ids(&splits.train),
                val: ids(&splits.val),
                test: ids(&splits.test),
            };
            write(&dir.join(SPLITS_FILE), serde_json::to_string_pretty(&split_ids)?.as_bytes())?;
            log::info!(
                "split {} / {} / {}",
                split_ids.train.len(),
                split_ids.val.len(),
                split_ids.test.len()
            );
        }
        Ok(self.manifest_path())
    }

    pub fn load_manifest(&self) -> Result<Manifest> {
        let path = self.manifest_path();
        let m = Manifest::load(&path)?;
        if m.is_empty() {
            return Err(Error::Data(format!("{}: manifest is empty", path.display())));
        }
        Ok(m)
    }

    /// The stored split, or one computed from the configured fractions.
    pub fn load_splits(&self, manifest: &Manifest) -> Result<SplitIds> {
        let path = self.config.data_dir.join(SPLITS_FILE);
        let ids = if path.exists() {
            read_json(&path)?
        } else {
            let s = split_dataset(manifest, self.config.train_frac, self.config.val_frac, self.config.seed())?;
            let ids = |m: &Manifest| m.entries.iter().map(|e| e.id.clone()).collect::<Vec<_>>();
            SplitIds {
                train: ids(&s.train),
                val: ids(&s.val),
                test: ids(&s.test),
            }
        };
        ids.validate(manifest)?;
        Ok(ids)
    }

    fn split_indices(&self, manifest: &Manifest, splits: &SplitIds, which: SplitName) -> Vec<usize> {
        let pos: HashMap<&str, usize> = manifest
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.as_str(), i))
            .collect();
        splits.get(which).iter().map(|id| pos[id.as_str()]).collect()
    }

    fn token_bags(&self, manifest: &Manifest, idx: &[usize], ex: &dyn ModalityExtractor) -> Result<Vec<TokenBag>> {
        idx.par_iter()
            .map(|&i| ex.tokens(&manifest.load_sample(i)?))
            .collect()
    }

    /// Trains the aggregator of `modality` on the training split's token bags.
    pub fn train_aggregator(&self, modality: Modality) -> Result<(PathBuf, TrainTrace)> {
        let ex = self.extractor(modality)?;
        if !ex.uses_aggregator() {
            return Err(Error::Invalid(format!("{modality} features have no aggregator")));
        }
        let manifest = self.load_manifest()?;
        let splits = self.load_splits(&manifest)?;
        let idx = self.split_indices(&manifest, &splits, SplitName::Train);
        let bags = self.token_bags(&manifest, &idx, ex.as_ref())?;
        let all_tokens: Vec<Vec<f64>> = bags.iter().flat_map(|b| b.tokens.iter().cloned()).collect();
        if all_tokens.len() < 2 {
            return Err(Error::Data(format!("training split has no {modality} tokens")));
        }
        let stats = ColumnStats::fit(&all_tokens)?;
        let mut train_bags = Vec::new();
        for (bag, &i) in bags.iter().zip(&idx) {
            if bag.tokens.is_empty() {
                log::warn!("{}: no {modality} tokens, skipped for training", manifest.entries[i].id);
                continue;
            }
            let rows = bag.tokens.iter().map(|t| stats.apply(t)).collect::<Result<Vec<_>>>()?;
            train_bags.push(Bag {
                tokens: Matrix::from_rows(&rows)?,
                label: manifest.entries[i].label,
            });
        }
        let config = TrainConfig {
            epochs: self.config.epochs,
            batch_size: self.config.batch_size,
            lr0: self.config.lr0,
            momentum: self.config.momentum,
            decay_every: self.config.decay_every,
            seed: self.config.seed() ^ u64::from(modality.code()),
            init: InitScheme::FanIn,
        };
        let kernel = self.kernel_for(modality)?;
        let (model, trace) = train_aggregator(
            &train_bags,
            self.config.pooled_dim,
            self.config.heads,
            &config,
            kernel.as_ref(),
        )?;
        let path = self.aggregator_path(modality);
        write(&path, &model.to_bytes())?;
        write(&self.token_stats_path(modality), serde_json::to_string_pretty(&stats)?.as_bytes())?;
        write(&self.report_path(&format!("{}_loss.csv", modality.name())), trace.to_csv().as_bytes())?;
        log::info!(
            "{modality} aggregator: loss {:.4} -> {:.4}",
            trace.initial_loss,
            trace.epochs.last().map_or(trace.initial_loss, |e| e.loss)
        );
        Ok((path, trace))
    }

    pub fn load_aggregator(&self, modality: Modality) -> Result<TrainedAggregator> {
        let path = self.aggregator_path(modality);
        if !path.exists() {
            return Err(Error::Data(format!(
                "missing {}; run train-aggregator for {modality} first",
                path.display()
            )));
        }
        Ok(TrainedAggregator {
            model: AggregatorModel::load(&path)?,
            kernel: self.kernel_for(modality)?,
            tokens: read_json(&self.token_stats_path(modality))?,
        })
    }

    /// One feature row per manifest entry, written as the modality's cache.
    pub fn extract(&self, modality: Modality) -> Result<PathBuf> {
        let ex = self.extractor(modality)?;
        let manifest = self.load_manifest()?;
        let aggregator = if ex.uses_aggregator() {
            Some(self.load_aggregator(modality)?)
        } else {
            None
        };
        let dim = ex.feature_dim(aggregator.as_ref().map_or(self.config.pooled_dim, |a| a.model.dims.pooled_dim));
        let rows = (0..manifest.len())
            .into_par_iter()
            .map(|i| {
                let sample = manifest.load_sample(i)?;
                let e = ex.extract(&sample, aggregator.as_ref())?;
                if e.degenerate {
                    log::warn!("{}: degenerate {modality} features, using zeros", sample.id);
                }
                Ok(e.values)
            })
            .collect::<Result<Vec<_>>>()?;
        let cache = FeatureCache::new(modality, dim, rows)?;
        let path = self.cache_path(modality);
        write_feature_cache_at(&path, &cache)?;
        Ok(path)
    }

    fn load_cache(&self, modality: Modality, expected: usize) -> Result<FeatureCache> {
        let path = self.cache_path(modality);
        if !path.exists() {
            return Err(Error::Data(format!(
                "missing {modality} feature cache {}; run extract for {modality}",
                path.display()
            )));
        }
        let cache = read_feature_cache(&path)?;
        if cache.modality != modality || cache.len() != expected {
            return Err(Error::Data(format!(
                "{}: holds {} {} rows, manifest has {expected}",
                path.display(),
                cache.len(),
                cache.modality
            )));
        }
        Ok(cache)
    }

    /// Features of all three modalities for every manifest entry.
    pub fn load_features(&self, manifest: &Manifest) -> Result<FeatureSet> {
        let n = manifest.len();
        let [cell, tissue, edge] = Modality::ALL.map(|m| self.load_cache(m, n));
        Ok(FeatureSet {
            cell: cell?.rows,
            tissue: tissue?.rows,
            edge: edge?.rows,
            labels: manifest.labels(),
        })
    }

    /// Manifest, full feature set and the three split subsets.
    pub fn split_features(&self) -> Result<(Manifest, SplitIds, BTreeMap<&'static str, FeatureSet>)> {
        let manifest = self.load_manifest()?;
        let splits = self.load_splits(&manifest)?;
        let all = self.load_features(&manifest)?;
        let mut out = BTreeMap::new();
        for which in [SplitName::Train, SplitName::Val, SplitName::Test] {
            out.insert(which.name(), all.subset(&self.split_indices(&manifest, &splits, which)));
        }
        Ok((manifest, splits, out))
    }

    fn fusion_weights(&self) -> Result<crate::fusion::FusionWeights> {
        match self.config.weight_source {
            WeightSource::Fixed => Ok(self.config.weights),
            WeightSource::Grid => {
                let path = self.config.model_dir.join(GRID_BEST_FILE);
                if !path.exists() {
                    return Err(Error::Data(format!("missing {}; run gridsearch first", path.display())));
                }
                Ok(FusionConfig::load(&path)?.weights)
            }
        }
    }

    /// One-vs-one SVM on the fused training features.
    pub fn train_svm(&self) -> Result<PathBuf> {
        let (manifest, _, sets) = self.split_features()?;
        let train = &sets["train"];
        let config = FusionConfig {
            weights: self.fusion_weights()?,
            normalizer: fit_normalizer(train)?,
        };
        let x = fuse_set(train, &config)?;
        let ensemble = train_multiclass(&x, &train.labels, &self.svm_params())?;
        if ensemble.classes != manifest.num_classes() {
            return Err(Error::Data(format!(
                "training split covers {} of {} classes",
                ensemble.classes,
                manifest.num_classes()
            )));
        }
        for p in &ensemble.pairs {
            if !p.svm.meta.converged {
                log::warn!("pair ({}, {}) stopped at the update limit, gap {:.2e}", p.i, p.j, p.svm.meta.gap);
            }
        }
        let path = self.config.model_dir.join(SVM_FILE);
        write(&path, &ensemble.to_bytes())?;
        write(&self.config.model_dir.join(FUSION_FILE), serde_json::to_string_pretty(&config)?.as_bytes())?;
        Ok(path)
    }

    fn load_svm(&self) -> Result<(SvmEnsemble, FusionConfig)> {
        let path = self.config.model_dir.join(SVM_FILE);
        if !path.exists() {
            return Err(Error::Data(format!("missing {}; run train-svm first", path.display())));
        }
        Ok((SvmEnsemble::load(&path)?, FusionConfig::load(&self.config.model_dir.join(FUSION_FILE))?))
    }

    /// Scores the trained SVM on one split.
    pub fn evaluate(&self, split: SplitName) -> Result<Evaluation> {
        let (_, splits, sets) = self.split_features()?;
        let set = &sets[split.name()];
        let (ensemble, config) = self.load_svm()?;
        let x = fuse_set(set, &config)?;
        let predictions = ensemble.predict_labels(&x)?;
        let confusion = confusion_matrix(&set.labels, &predictions, ensemble.classes)?;
        let metrics = compute_metrics(&confusion)?;

        let mut pred_csv = String::from("id,true_label,pred_label\n");
        for ((id, t), p) in splits.get(split).iter().zip(&set.labels).zip(&predictions) {
            let _ = writeln!(pred_csv, "{id},{t},{p}");
        }
        let reports = vec![
            self.report_path(&format!("metrics_{}.csv", split.name())),
            self.report_path(&format!("confusion_{}.csv", split.name())),
            self.report_path(&format!("predictions_{}.csv", split.name())),
        ];
        write(&reports[0], metrics_csv(&metrics).as_bytes())?;
        write(&reports[1], confusion.to_csv().as_bytes())?;
        write(&reports[2], pred_csv.as_bytes())?;
        log::info!(
            "{} split: weighted F1 {:.4}, balanced accuracy {:.4}",
            split.name(),
            metrics.weighted_f1,
            metrics.balanced_accuracy
        );
        Ok(Evaluation {
            metrics,
            confusion,
            predictions,
            reports,
        })
    }

    /// Modality-subset table: trained on train, scored on test.
    pub fn ablate(&self) -> Result<(PathBuf, AblationTable)> {
        let (_, _, sets) = self.split_features()?;
        let table = run_ablation(&sets["train"], &sets["test"], self.classifier()?.as_ref())?;
        let path = self.report_path("ablation.csv");
        write(&path, table.to_csv().as_bytes())?;
        Ok((path, table))
    }

    /// Fusion-weight grid: trained on train, selected on val.
    pub fn gridsearch(&self, grid: &GridSpec) -> Result<(PathBuf, GridResult)> {
        let (_, _, sets) = self.split_features()?;
        let result = grid_search_weights(&sets["train"], &sets["val"], grid, self.classifier()?.as_ref())?;
        let path = self.report_path("heatmap.csv");
        write(&path, result.heatmap_csv().as_bytes())?;
        write(
            &self.config.model_dir.join(GRID_BEST_FILE),
            serde_json::to_string_pretty(&result.best)?.as_bytes(),
        )?;
        let w = result.best.weights;
        log::info!(
            "best weights ({}, {}, {}): weighted F1 {:.4}",
            w.alpha,
            w.beta,
            w.gamma,
            result.best_metrics.weighted_f1
        );
        Ok((path, result))
    }

    /// PCA of one modality's cache (or the fused features) for plotting.
    /// `pred_label` is filled when a trained SVM exists.
    pub fn project(&self, source: &str) -> Result<PathBuf> {
        let manifest = self.load_manifest()?;
        let rows: Vec<Vec<f64>> = if source == "fusion" {
            let (_, config) = self.load_svm()?;
            let x = fuse_set(&self.load_features(&manifest)?, &config)?;
            (0..x.rows()).map(|r| x.row(r).to_vec()).collect()
        } else {
            let m: Modality = source.parse()?;
            self.load_cache(m, manifest.len())?.rows
        };
        if rows.len() < 2 {
            return Err(Error::Data("projection needs at least 2 samples".into()));
        }
        let xy = pca_project(&Matrix::from_rows(&rows)?, 2)?;
        let predictions = match self.load_svm() {
            Ok((ensemble, config)) => match self.load_features(&manifest) {
                Ok(all) => Some(ensemble.predict_labels(&fuse_set(&all, &config)?)?),
                Err(_) => None,
            },
            Err(_) => None,
        };
        let mut csv = String::from("id,x,y,true_label,pred_label\n");
        for (i, e) in manifest.entries.iter().enumerate() {
            let pred = predictions.as_ref().map_or(String::new(), |p| p[i].to_string());
            let _ = writeln!(csv, "{},{:.6},{:.6},{},{pred}", e.id, xy[(i, 0)], xy[(i, 1)], e.label);
        }
        let path = self.report_path(&format!("projection_{source}.csv"));
        write(&path, csv.as_bytes())?;
        Ok(path)
    }
}

fn write_feature_cache_at(path: &Path, cache: &FeatureCache) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_feature_cache(path, cache)
}
