//! Numerical engine for studying oversmoothing in graph neural networks.
//!
//! * [`linalg`]: dense kernels, Jacobi singular values, spectral norms of Â.
//! * [`graph`]: normalized adjacency in CSR form and sparse-dense products.
//! * [`metrics`]: MASED, its per-layer and network bounds, and related
//!   diagnostics.
//! * [`model`]: GCN, ResGCN and stacked-SGC forward/backward passes.
//! * [`train`]: loss, G-Reg, Adam, cold start, the training loop.
//! * [`data`]: dataset directories and SBM generation.

pub mod data;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod train;

pub use graph::{normalize_adjacency, NormalizedAdjacency, SparseGraph};
pub use linalg::{svd_values, DenseMatrix, SvdSummary};
pub use model::{Family, ModelSpec, Parameters};
pub use train::{train_model, MetricRecord, TrainConfig};
