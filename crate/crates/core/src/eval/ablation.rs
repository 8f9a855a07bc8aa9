use std::fmt::Write as _;

use rayon::prelude::*;

use crate::descriptors::Modality;
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, confusion_matrix, ConfusionMatrix, MetricsReport};
use crate::fusion::{fit_normalizer, fuse_set, FeatureSet, FusionConfig, FusionWeights};
use crate::svm::Classifier;

/// Modality subsets in table order: the three singles, the three pairs, then all three.
pub const ABLATION_SUBSETS: [&[Modality]; 7] = [
    &[Modality::Cell],
    &[Modality::Tissue],
    &[Modality::Edge],
    &[Modality::Cell, Modality::Tissue],
    &[Modality::Cell, Modality::Edge],
    &[Modality::Tissue, Modality::Edge],
    &[Modality::Cell, Modality::Tissue, Modality::Edge],
];

pub fn subset_name(subset: &[Modality]) -> String {
    if subset.len() == Modality::ALL.len() {
        return "fusion".into();
    }
    subset.iter().map(|m| m.name()).collect::<Vec<_>>().join("+")
}

/// Unit weight for included modalities, zero otherwise.
pub fn subset_weights(subset: &[Modality]) -> FusionWeights {
    let w = |m| if subset.contains(&m) { 1.0 } else { 0.0 };
    FusionWeights {
        alpha: w(Modality::Cell),
        beta: w(Modality::Tissue),
        gamma: w(Modality::Edge),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub subset: String,
    pub weights: FusionWeights,
    pub metrics: MetricsReport,
    pub confusion: ConfusionMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, subset: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.subset == subset)
    }

    /// `subset,acc,balanced_acc,macro_f1,weighted_f1`; `acc` is plain accuracy.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subset,acc,balanced_acc,macro_f1,weighted_f1\n");
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6}",
                r.subset, m.accuracy, m.balanced_accuracy, m.macro_f1, m.weighted_f1
            );
        }
        out
    }
}

/// Trains on `train`, scores on `test`, once per subset.
pub fn run_ablation(
    train: &FeatureSet,
    test: &FeatureSet,
    classifier: &dyn Classifier,
) -> Result<AblationTable> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Invalid("ablation needs nonempty train and test sets".into()));
    }
    let classes = train.labels.iter().chain(&test.labels).max().map_or(0, |m| m + 1);
    let normalizer = fit_normalizer(train)?;
    test.validate()?;
    let rows = ABLATION_SUBSETS
        .par_iter()
        .map(|subset| {
            let cfg = FusionConfig {
                weights: subset_weights(subset),
                normalizer: normalizer.clone(),
            };
            let model = classifier.fit(&fuse_set(train, &cfg)?, &train.labels, classes)?;
            let pred = model.predict_rows(&fuse_set(test, &cfg)?)?;
            let confusion = confusion_matrix(&test.labels, &pred, classes)?;
            Ok(AblationRow {
                subset: subset_name(subset),
                weights: cfg.weights,
                metrics: compute_metrics(&confusion)?,
                confusion,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::SeededRng;
    use crate::svm::{SvmClassifier, SvmParams};

    /// Class 0/1 separable only by cell, 0/2 only by tissue, 0/3 only by edge.
    fn synthetic(seed: u64, per_class: usize) -> FeatureSet {
        let mut rng = SeededRng::new(seed);
        let mut set = FeatureSet::default();
        for label in 0..4 {
            for _ in 0..per_class {
                let mut row = |d: usize, hot: bool| -> Vec<f64> {
                    (0..d).map(|_| rng.gaussian() * 0.3 + if hot { 3.0 } else { 0.0 }).collect()
                };
                set.cell.push(row(3, label == 1));
                set.tissue.push(row(2, label == 2));
                set.edge.push(row(4, label == 3));
                set.labels.push(label);
            }
        }
        set
    }

    #[test]
    fn seven_rows_in_table_order() {
        let names: Vec<String> = ABLATION_SUBSETS.iter().map(|s| subset_name(s)).collect();
        assert_eq!(
            names,
            ["cell", "tissue", "edge", "cell+tissue", "cell+edge", "tissue+edge", "fusion"]
        );
        let w = subset_weights(ABLATION_SUBSETS[4]);
        assert_eq!((w.alpha, w.beta, w.gamma), (1.0, 0.0, 1.0));
    }

    #[test]
    fn fusion_row_beats_every_single_modality() {
        let train = synthetic(1, 20);
        let test = synthetic(2, 10);
        let svm = SvmClassifier { params: SvmParams::default() };
        let table = run_ablation(&train, &test, &svm).unwrap();
        assert_eq!(table.rows.len(), 7);
        let fused = table.row("fusion").unwrap().metrics.weighted_f1;
        assert!(fused > 0.95, "{fused}");
        for s in ["cell", "tissue", "edge"] {
            assert!(table.row(s).unwrap().metrics.weighted_f1 < fused);
        }
        let again = run_ablation(&train, &test, &svm).unwrap();
        assert_eq!(table.to_csv(), again.to_csv());
        assert_eq!(table.to_csv().lines().count(), 8);
    }

    #[test]
    fn empty_sets_are_rejected() {
        let svm = SvmClassifier { params: SvmParams::default() };
        assert!(run_ablation(&FeatureSet::default(), &synthetic(1, 2), &svm).is_err());
    }
}
