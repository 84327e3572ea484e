//! Forward and gradient kernels the network is assembled from.
//!
//! Every kernel is a pure function over its inputs. Backward functions take
//! the forward inputs (or outputs, where cheaper) plus the gradient of the
//! scalar objective with respect to the forward output.

mod conv;
mod depthwise;
mod elementwise;
mod pool;

pub use conv::{conv2d, conv2d_backward, Conv2dGrads, Padding};
pub(crate) use conv::conv2d_backward_impl;
pub use depthwise::{
    depthwise_conv2d, depthwise_conv2d_backward, depthwise_separable_conv2d,
    depthwise_separable_conv2d_backward, separable_param_count, standard_param_count,
    SeparableGrads,
};
pub use elementwise::{
    concat_channels, relu, relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar, split_channels,
};
pub use pool::{maxpool2d, maxpool2d_backward, upsample_nearest2x, upsample_nearest2x_backward};
