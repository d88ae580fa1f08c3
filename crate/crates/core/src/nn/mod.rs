//! Layer primitives: convolution, batch normalization, activations, dropout
//! and the classifier head. The differentiable kernels are methods on
//! [`Graph`](crate::autograd::Graph); this module also holds the parameter
//! containers that bind into it.

mod activation;
mod batchnorm;
mod conv;
mod head;
mod layers;
pub mod reference;

pub use activation::sigmoid_scalar;
pub use batchnorm::BatchStats;
pub use conv::ConvGeometry;
pub use head::softmax_xent_reference;
pub use layers::{
    he_normal, BatchNormParams, Conv2dParams, ForwardCtx, GateParams, LinearParams, Mode, ParamKind,
    Parameterized, BN_EPSILON, BN_MOMENTUM,
};
