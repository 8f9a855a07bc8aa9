use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{compute_metrics, confusion_matrix, MetricsReport};
use crate::fusion::{fit_normalizer, fuse_set, FeatureSet, FusionConfig, FusionWeights};
use crate::svm::Classifier;

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl Default for GridSpec {
    /// α, β ∈ {0, 0.1, …, 1}, γ ∈ {0, 0.25, 0.5, 0.75, 1}.
    fn default() -> Self {
        let tenths: Vec<f64> = (0..=10).map(|i| f64::from(i) / 10.0).collect();
        Self {
            alphas: tenths.clone(),
            betas: tenths,
            gammas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

impl GridSpec {
    pub fn single(w: FusionWeights) -> Self {
        Self {
            alphas: vec![w.alpha],
            betas: vec![w.beta],
            gammas: vec![w.gamma],
        }
    }

    /// Points in γ-major, then α, then β order.
    pub fn points(&self) -> Vec<FusionWeights> {
        let mut out = Vec::with_capacity(self.alphas.len() * self.betas.len() * self.gammas.len());
        for &gamma in &self.gammas {
            for &alpha in &self.alphas {
                for &beta in &self.betas {
                    out.push(FusionWeights { alpha, beta, gamma });
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapRow {
    pub weights: FusionWeights,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub best: FusionConfig,
    pub best_metrics: MetricsReport,
    pub rows: Vec<HeatmapRow>,
}

impl GridResult {
    /// `alpha,beta,gamma,acc,weighted_f1` with six-decimal metrics; `acc` is
    /// balanced accuracy.
    pub fn heatmap_csv(&self) -> String {
        let mut out = String::from("alpha,beta,gamma,acc,weighted_f1\n");
        for r in &self.rows {
            let w = r.weights;
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6}",
                w.alpha, w.beta, w.gamma, r.metrics.balanced_accuracy, r.metrics.weighted_f1
            );
        }
        out
    }
}

/// Validation metrics of `classifier` trained on `train` fused with `config`.
pub fn evaluate_weights(
    train: &FeatureSet,
    val: &FeatureSet,
    config: &FusionConfig,
    classifier: &dyn Classifier,
    classes: usize,
) -> Result<MetricsReport> {
    let xtr = fuse_set(train, config)?;
    let xva = fuse_set(val, config)?;
    let model = classifier.fit(&xtr, &train.labels, classes)?;
    let pred = model.predict_rows(&xva)?;
    compute_metrics(&confusion_matrix(&val.labels, &pred, classes)?)
}

/// Exhaustive search; the winner maximizes weighted F1, then balanced
/// accuracy, then is the lexicographically smallest `(α, β, γ)`.
pub fn grid_search_weights(
    train: &FeatureSet,
    val: &FeatureSet,
    grid: &GridSpec,
    classifier: &dyn Classifier,
) -> Result<GridResult> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Invalid("grid search needs nonempty train and validation sets".into()));
    }
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::Invalid("empty grid".into()));
    }
    for w in &points {
        w.validate()?;
    }
    let classes = train.labels.iter().chain(&val.labels).max().map_or(0, |m| m + 1);
    let normalizer = fit_normalizer(train)?;
    let rows = points
        .par_iter()
        .map(|&weights| {
            let cfg = FusionConfig {
                weights,
                normalizer: normalizer.clone(),
            };
            let metrics = evaluate_weights(train, val, &cfg, classifier, classes)?;
            Ok(HeatmapRow { weights, metrics })
        })
        .collect::<Result<Vec<_>>>()?;

    let key = |r: &HeatmapRow| (r.metrics.weighted_f1, r.metrics.balanced_accuracy);
    let mut best = &rows[0];
    for r in &rows[1..] {
        let (f, a) = key(r);
        let (bf, ba) = key(best);
        let lex_smaller = (r.weights.alpha, r.weights.beta, r.weights.gamma)
            < (best.weights.alpha, best.weights.beta, best.weights.gamma);
        if f > bf || (f == bf && (a > ba || (a == ba && lex_smaller))) {
            best = r;
        }
    }
    Ok(GridResult {
        best: FusionConfig {
            weights: best.weights,
            normalizer,
        },
        best_metrics: best.metrics.clone(),
        rows,
    })
}
