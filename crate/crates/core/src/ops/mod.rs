//! Forward and backward kernels for the layer set of the network.
//!
//! Every kernel is a pure function of its inputs (batch-norm additionally
//! of an explicit state object) and runs single-threaded, so results are
//! bitwise reproducible.

mod conv;
mod dense;
mod norm;
mod pool;

pub use conv::{conv1d, conv1d_backward, same_offset};
pub use dense::{
    linear, linear_backward, one_hot, relu, relu_backward, softmax, softmax_cross_entropy,
    softmax_cross_entropy_backward,
};
pub use norm::{
    batch_norm_raw, batchnorm, batchnorm_backward, batchnorm_eval, channel_stats, BatchNormCache, BatchNormState,
    NormMode, RunningStats, DEFAULT_EPS, DEFAULT_MOMENTUM,
};
pub use pool::{
    global_avg_pool_time, global_avg_pool_time_backward, maxpool1d, maxpool1d_backward,
};
