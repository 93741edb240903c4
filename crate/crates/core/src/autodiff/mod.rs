//! Minimal reverse-mode automatic differentiation: float32 tensors, a tape
//! of recorded ops with exact vector-Jacobian products, the layer set needed
//! by the mapping/localization/translation networks, a pose-differentiable
//! SE(2) bilinear grid sampler, and Adam.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
mod grid_sample;
mod ops;
mod tensor;

#[cfg(test)]
mod tests;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use graph::{Graph, NodeId, ParamSet, Parameter};
pub use grid_sample::kink_clearance;
pub use tensor::Tensor;
