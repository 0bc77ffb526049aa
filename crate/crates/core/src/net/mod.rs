//! The landmark regression network: convolution / batch-norm / ReLU / pooling
//! blocks, dropout-equipped dense layers and a linear `2N` coordinate head.

pub mod gradcheck;
pub mod layers;
mod model;
mod real;
mod tensor;

pub use model::{
    init_params, ConvBlock, DenseLayer, ForwardCache, Gradients, Mode, ModelState, NetworkConfig,
};
pub use real::{matmul, Real};
pub use tensor::Tensor;
