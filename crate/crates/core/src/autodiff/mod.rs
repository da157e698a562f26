//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.

mod graph;
mod optim;
mod params;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use params::{BoundParams, ModelParams, Param};
pub use tensor::Tensor;
