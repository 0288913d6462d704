//! Neural-network core: tensors, layers, models, optimizer, loss, accounting
//! and checkpoints. Gradients are derived by hand per layer.

pub mod adam;
pub mod checkpoint;
pub mod count;
pub mod layers;
pub mod loss;
pub mod model;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use count::{complexity, count_flops, count_params, Complexity, FLOP_CONVENTION, REFERENCE_ROWS};
pub use layers::{softmax, Activation, Layer, LayerCache, LayerSpec, Mode, Padding};
pub use loss::{bce_loss, bce_with_grad, POSITIVE_CLASS, PROB_CLIP};
pub use model::{Architecture, ForwardCache, Gradients, ModelGraph, SampleCache, Section};
pub use tensor::{Scalar, Tensor};
