//! Residual units with configurable shortcuts and activation orderings,
//! a small reverse-mode autograd engine to train and instrument them, and
//! numerical checks of how signals and gradients propagate through stacks of
//! such units.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). Training
//! uses `f32`; algebraic identity and gradient checks use `f64`. The aliases
//! below name the common instantiations.

pub mod autograd;
pub mod data;
pub mod error;
pub mod lab;
pub mod network;
pub mod nn;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod units;

pub use autograd::{grad_check, Graph, NodeId};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Graph32 = Graph<f32>;
pub type Graph64 = Graph<f64>;
