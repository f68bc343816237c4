//! Minimal dense tensors with a reverse-mode tape.

mod array;
mod graph;
mod scalar;

pub use array::Tensor;
pub use graph::{Grads, Graph, Var};
pub use scalar::Scalar;
