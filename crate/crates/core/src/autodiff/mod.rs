//! Dense tensors and reverse-mode automatic differentiation with support for
//! higher-order gradients.

mod check;
mod graph;
mod tensor;

pub use check::finite_difference_check;
pub use graph::{Graph, Var};
pub use tensor::Tensor;
