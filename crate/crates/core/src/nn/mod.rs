//! A small layer engine with hand-written reverse-mode gradients and Adam.
//!
//! Activations are batch-first row-major [`Tensor`]s: `[batch, len, channels]`
//! for convolutional layers and `[batch, features]` for dense layers. Every
//! value is `f64`; training is single-threaded and bit-for-bit reproducible
//! for a fixed seed and data order.

pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod params;
pub mod tensor;

pub use layers::{
    batchnorm_forward, conv1d_forward, BatchNormStats, Layer, LayerSpec, Mode, Sequential,
};
pub use loss::{mse, softmax, softmax_cross_entropy};
pub use optim::{AdamConfig, OptimizerState};
pub use params::{Gradients, Param, ParamId, ParamRole, ParamStore};
pub use tensor::Tensor;
