//! Spaces, linear operators and their spectral analysis.

mod analysis;
mod op;
mod space;
pub mod vec_ops;

pub use analysis::{analyze, analyze_matrix, orthonormal_span, pseudo_inverse, OperatorAnalysis, KERNEL_TOL};
pub(crate) use analysis::full_svd;
pub use op::{power_iteration, LinOp, NormEstimate, Operator, DENSE_LIMIT};
pub(crate) use space::{grid_strides, ravel, unravel};
pub use space::{multi_indices, multiplicity, sym_tensor_channels, Component, Space, SpaceSpec};
