//! Layer primitives with explicit forward contexts and backward passes.

mod gemm;

pub mod activation;
pub mod conv;
pub mod linear;
pub mod loss;
pub mod pool;

pub use activation::{relu, relu_backward};
pub use conv::{conv2d, conv2d_backward, conv2d_direct, conv2d_with_context, same_padding, ConvContext, ConvGrads};
pub use linear::{linear, linear_backward, linear_with_context, LinearContext, LinearGrads};
pub use loss::{argmax_rows, softmax_cross_entropy, CrossEntropy};
pub use pool::{maxpool2x2, maxpool2x2_backward, maxpool2x2_with_context, pooled_shape, PoolContext};
