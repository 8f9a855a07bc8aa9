//! Attention pooling of token bags into one global vector.
//!
//! Tokens are projected to `D` dimensions and read by a learnable pooling
//! token through multi-head attention; the pooled vector is the pool token
//! plus the attention output (residual, no normalization). A linear head maps
//! it to class logits during training. The pooling token acts only as a
//! query, so the output is invariant to token order and to duplicating the
//! whole bag.

mod kernel;
mod model;
mod train;

pub use kernel::{
    AttentionKernel, AttentionTape, ExactKernel, HeadGrads, HeadInput, KernelOptions, KernelRegistry,
    NystromKernel,
};
pub use model::{
    cross_entropy, AggregatorDims, AggregatorModel, ForwardCache, ForwardOutput, InitScheme, Params,
    MODEL_MAGIC, TENSOR_NAMES,
};
pub use train::{
    batch_loss_and_grad, grad_check, mean_loss, train_aggregator, Bag, EpochRecord, GradCheckReport,
    TrainConfig, TrainTrace,
};

use crate::descriptors::{FeatureVector, Modality};
use crate::error::Result;
use crate::numkit::Matrix;

/// Pooled vector of a bag tagged with the caller's modality; the head is unused.
pub fn aggregate(
    tokens: &Matrix,
    model: &AggregatorModel,
    kernel: &dyn AttentionKernel,
    modality: Modality,
) -> Result<FeatureVector> {
    FeatureVector::new(modality, model.pool(tokens, kernel)?)
}

#[cfg(test)]
mod tests;
