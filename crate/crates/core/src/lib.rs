//! Matrix function networks: learnable pole expansions of graph operators.
//!
//! Modules follow the data path: [`graph`] holds datasets, [`linalg`] the
//! block-sparse and dense kernels, [`operator`] builds and normalizes the
//! per-layer operators, [`matfunc`] evaluates `f(H)` and its adjoints,
//! [`model`] stacks the layers and [`train`] fits them.

pub mod error;
pub mod graph;
pub mod linalg;
pub mod matfunc;
pub mod model;
pub mod operator;
pub mod train;

pub(crate) mod activation;

pub use error::{MfnError, Result};
pub use graph::{Dataset, GeometricGraph, Graph, Graphs, Target, Task};
pub use linalg::{BlockSparseMat, BlockSparsePattern, CMat, OrderingMethod, RMat};
pub use matfunc::{Backend, MatFnResult, PoleSet};
pub use model::{GraphRef, ModelConfig, ModelParams, Prediction};
pub use operator::{NormMode, OperatorStack, SlotLayout};
pub use train::{History, LossKind, TrainConfig, TrainOutcome};
