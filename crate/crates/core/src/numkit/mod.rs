//! Small dense linear-algebra kernel shared by the numerical modules.

mod matrix;
mod pca;
mod pinv;
mod rng;

pub use matrix::{dot, matmul, softmax_in_place, softmax_rows, softmax_rows_backward, Matrix};
pub use pca::pca_project;
pub use pinv::{
    penrose_residuals, pinv_backward, pinv_iterative, pinv_iterative_trace, PinvTrace,
    DEFAULT_PINV_ITERS,
};
pub use rng::{fnv1a, splitmix64, SeededRng};
