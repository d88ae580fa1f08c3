//! Reverse-mode automatic differentiation.

mod check;
mod graph;
mod ops;

pub use check::{grad_check, grad_check_many, relative_error, GradCheck};
pub use graph::{BackwardCtx, BackwardFn, Graph, NodeId};
