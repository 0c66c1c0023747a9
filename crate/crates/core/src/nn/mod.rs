//! Tensor math, layers, and the soft-max output.

pub mod network;
pub mod ops;
pub mod softmax;

pub use network::{Cache, Forward, LayerSpec, Network, NetworkSpec};
pub use ops::Activation;
pub use softmax::{log_sum_exp, softmax};
