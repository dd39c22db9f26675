//! Minimal feed-forward network engine: dense layers with optional batch
//! normalization, backpropagation, Adam, and finite-difference checking.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
mod network;
mod spec;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::NetworkCheckpoint;
pub use gradcheck::{gradient_check, randomize_biases, LossKind};
pub use network::{
    BatchNorm, DenseLayer, ForwardCache, Gradients, LayerGradients, Mlp, Mode, BATCH_NORM_EPSILON,
    BATCH_NORM_MOMENTUM,
};
pub use spec::{sigmoid, Activation, LayerSpec, MlpSpec};
