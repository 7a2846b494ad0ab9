//! A small dense-tensor convolutional network engine: inception-style
//! blocks built from 1x1 and 3x3 convolutions, five sigmoid output
//! heads, reverse-mode gradients and SGD training. No external ML
//! dependencies; gradients are verified against finite differences in
//! the acceptance suite.

pub mod network;
pub mod ops;
pub mod spec;
pub mod tensor;
pub mod train;
pub mod weights;

pub use network::{build_network, ActionVector, Gradients, Network};
pub use ops::{apply_activation, avgpool2d, concat_channels, conv2d, maxpool2d, Activation};
pub use spec::{full_preset, tiny_preset, LayerSpec, NetworkSpec};
pub use tensor::Tensor;
pub use train::{
    backward, bce_loss, forward_backward, train, train_epochs, SgdOptimizer, TrainHyper,
    TrainReport, TrainSet,
};
pub use weights::{load_checkpoint, load_weights, save_checkpoint, save_weights};
