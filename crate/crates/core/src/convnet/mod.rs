//! Small sequential convnets with manual backpropagation.

mod network;
mod params;
mod spec;
mod train;

pub use network::{loss_xent, softmax, xent_grad, ForwardCache, Gradients, Mode, Network};
pub use params::{load_params, replace_head, save_params, DType, ModelParams, ParamTensor};
pub use spec::{LayerSpec, NetworkSpec, ParamSpec, Shape};
pub use train::{
    argmax, batch_gradient, evaluate, predict, regime, sgd_step, train, ExampleSet, TrainConfig,
    TrainExample,
};
