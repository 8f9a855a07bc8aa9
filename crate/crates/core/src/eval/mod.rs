//! Classification metrics and the modality ablation runner.

mod ablation;
mod metrics;

pub use ablation::{
    run_ablation, subset_name, subset_weights, AblationRow, AblationTable, ABLATION_SUBSETS,
};
pub use metrics::{compute_metrics, confusion_matrix, ConfusionMatrix, MetricsReport};
