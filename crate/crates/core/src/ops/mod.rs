//! Numeric kernels over [`Tensor4`](crate::Tensor4) values.

pub mod conv;
pub mod matmul;
pub mod pool;
pub mod resize;
pub mod softmax;

pub use conv::{conv2d_backward, conv2d_direct, conv2d_im2col, ConvGrads, ConvSpec};
pub use matmul::{matmul_batched, transpose_last2};
pub use pool::{global_avg_pool, maxpool2x2, reduce_mean};
pub use resize::{bilinear_resize, bilinear_resize_backward};
pub use softmax::{softmax_axis, softmax_backward};
