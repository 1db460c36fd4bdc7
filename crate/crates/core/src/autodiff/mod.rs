//! Dense tensors and a taped reverse-mode differentiation engine.
//!
//! Forward values are computed eagerly as nodes are added to a [`Graph`];
//! [`Graph::backward`] then walks the tape in reverse creation order.
//! Everything is `f64`.

mod gradcheck;
mod graph;
pub mod kernels;
mod optim;
pub mod suite;
mod tensor;

pub use gradcheck::{finite_diff_check, GradEntry, GradReport};
pub use graph::{Gradients, Graph, NodeId, Primitive};
pub use optim::{Optimizer, OptimizerKind};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("{kind}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        kind: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid tensor shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} does not match {len} values")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("{kind}: expected {expected} inputs, got {got}")]
    Arity {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{kind}: {message}")]
    InvalidParameter { kind: &'static str, message: String },
    #[error("{kind}: numeric overflow (non-finite output)")]
    NumericOverflow { kind: &'static str },
    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("non-finite gradient for parameter {parameter} at index {index}")]
    NonFiniteGradient { parameter: String, index: usize },
}
