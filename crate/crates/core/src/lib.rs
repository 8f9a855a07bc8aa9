//! Feature-fusion pipeline for histology tissue classification.
//!
//! The crate turns labeled image/mask pairs into three feature modalities and
//! classifies their weighted fusion:
//!
//! 1. **Cell** – per-nucleus descriptors aggregated by a trainable attention pool.
//! 2. **Tissue** – a global descriptor of the epithelial mask and its intensities.
//! 3. **Edge** – patches sampled along region contours, aggregated with Nyström
//!    attention and combined with KNN-graph statistics of the sample points.
//! 4. **Fusion** – z-scored, weighted concatenation fed to a one-vs-one linear SVM.
//!
//! Algorithm variants that share an interface (attention kernels, classifiers,
//! modality extractors) are registered by name and selected at runtime.

pub mod aggregator;
pub mod descriptors;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod graph;
pub mod imaging;
pub mod numkit;
pub mod pipeline;
pub mod svm;
pub mod synthgen;

pub use error::{Error, Result};
